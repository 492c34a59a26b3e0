"""Iso-surface extraction: case table, watertightness, metrics, incremental
updates, chunked progress and cancellation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import (
    component_euler_characteristics,
    ellipsoid_grid,
    is_watertight,
    mesh_triangle_multiset,
    sphere_density,
)
from voxelink import (
    CancelToken,
    Cancelled,
    DensityGrid,
    MaskVolume,
    MCConfig,
    VoxelVolume,
    build_density_grid,
    extract_isosurface,
    march_cube,
    update_region,
)
from voxelink.surface import (
    CASE_TABLE,
    CORNER_OFFSETS,
    EDGES,
    ExtractionState,
    compute_vertex_normals,
    mesh_area,
    mesh_volume,
)


def extract_grid(values, spacing=(1.0, 1.0, 1.0), **kw):
    grid = DensityGrid(np.asarray(values, np.float32), spacing)
    return extract_isosurface(grid, **kw)


class TestCaseTable:
    def test_empty_and_full_cases(self):
        assert CASE_TABLE[0] == []
        assert CASE_TABLE[255] == []

    def test_single_corner_cases_are_one_triangle(self):
        for c in range(8):
            assert len(CASE_TABLE[1 << c]) == 1
            assert len(CASE_TABLE[255 ^ (1 << c)]) == 1

    def test_max_triangles_per_case(self):
        assert max(len(t) for t in CASE_TABLE) == 5

    def test_triangle_edges_cut_for_their_case(self):
        # every emitted edge must join one inside and one outside corner
        for case, tris in enumerate(CASE_TABLE):
            inside = {c for c in range(8) if case & (1 << c)}
            for tri in tris:
                for e in tri:
                    a, b, _axis = EDGES[e]
                    assert (a in inside) != (b in inside)

    def test_complement_cuts_same_edges(self):
        # complementary cases cut exactly the same edge set (their loop
        # topology may legitimately differ on ambiguous faces)
        for case in range(256):
            fwd = {e for t in CASE_TABLE[case] for e in t}
            rev = {e for t in CASE_TABLE[255 ^ case] for e in t}
            assert fwd == rev

    def test_corner_offsets_bit_layout(self):
        assert CORNER_OFFSETS[0] == (0, 0, 0)
        assert CORNER_OFFSETS[1] == (1, 0, 0)
        assert CORNER_OFFSETS[2] == (0, 1, 0)
        assert CORNER_OFFSETS[4] == (0, 0, 1)
        assert CORNER_OFFSETS[7] == (1, 1, 1)


class TestMarchCube:
    def cube_positions(self):
        return [np.array(o, dtype=float) for o in CORNER_OFFSETS]

    def test_uniform_cube_emits_nothing(self):
        assert march_cube([0.0] * 8, self.cube_positions(), 0.5) == []
        assert march_cube([1.0] * 8, self.cube_positions(), 0.5) == []

    def test_tie_counts_as_outside(self):
        # one corner exactly at iso: no crossing anywhere
        d = [0.5] + [0.0] * 7
        assert march_cube(d, self.cube_positions(), 0.5) == []

    def test_single_inside_corner_triangle(self):
        d = [1.0] + [0.0] * 7
        tris = march_cube(d, self.cube_positions(), 0.5)
        assert len(tris) == 1
        # cut points at the midpoints of the three edges out of corner 0
        got = sorted(tuple(p) for p in tris[0])
        assert got == [(0.0, 0.0, 0.5), (0.0, 0.5, 0.0), (0.5, 0.0, 0.0)]

    def test_interpolation_position(self):
        # corner 0 at 0.8, neighbors 0.2: t = (0.5-0.8)/(0.2-0.8) = 0.5 ...
        d = [0.8, 0.2, 0.2, 0.0, 0.2, 0.0, 0.0, 0.0]
        tris = march_cube(d, self.cube_positions(), 0.5)
        got = sorted(tuple(p) for p in tris[0])
        assert got == [(0.0, 0.0, 0.5), (0.0, 0.5, 0.0), (0.5, 0.0, 0.0)]

    def test_normals_point_outward(self):
        # inside corner 0: triangle normal must have positive dot with the
        # direction away from the inside corner
        d = [1.0] + [0.0] * 7
        (tri,) = march_cube(d, self.cube_positions(), 0.5)
        n = np.cross(tri[1] - tri[0], tri[2] - tri[0])
        away = tri.mean(axis=0) - np.zeros(3)
        assert np.dot(n, away) > 0


class TestSingleVoxel:
    def test_octahedron(self):
        # one foreground voxel yields the 6-vertex, 8-triangle octahedron
        mesh = extract_grid(np.ones((1, 1, 1), np.float32))
        assert len(mesh.vertices) == 6
        assert mesh.triangle_count == 8
        assert is_watertight(mesh)
        assert component_euler_characteristics(mesh) == [2]

    def test_octahedron_volume(self):
        # [DERIVED] octahedron with half-diagonals 0.5: V = 4/3 * 0.5^3 = 1/6
        mesh = extract_grid(np.ones((1, 1, 1), np.float32))
        assert mesh_volume(mesh) == pytest.approx(1.0 / 6.0)

    def test_spacing_scales_coordinates(self):
        m1 = extract_grid(np.ones((1, 1, 1), np.float32))
        m2 = extract_grid(np.ones((1, 1, 1), np.float32), spacing=(2.0, 3.0, 4.0))
        assert mesh_volume(m2) == pytest.approx(mesh_volume(m1) * 24.0)


class TestWatertightness:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_random_binary_grids(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 7))
        vals = (rng.random((n, n, n)) > 0.5).astype(np.float32)
        mesh = extract_grid(vals)
        assert is_watertight(mesh)
        for chi in component_euler_characteristics(mesh):
            assert chi % 2 == 0 and chi <= 2

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_convex_shapes_are_spheres(self, seed):
        rng = np.random.default_rng(seed)
        mesh = extract_grid(ellipsoid_grid(rng))
        if mesh.triangle_count:
            assert is_watertight(mesh)
            assert component_euler_characteristics(mesh) == [2]

    def test_graded_grid_watertight(self):
        vals, _ = sphere_density(4.0, margin=3)
        mesh = extract_grid(vals)
        assert is_watertight(mesh)
        assert component_euler_characteristics(mesh) == [2]


class TestMetrics:
    def test_sphere_area_and_volume(self):
        # graded digitization of a radius-8 sphere: analytic surface area
        # and volume within 5%
        r = 8.0
        vals, _ = sphere_density(r)
        mesh = extract_grid(vals)
        assert mesh_area(mesh) == pytest.approx(4 * np.pi * r * r, rel=0.05)
        assert mesh_volume(mesh) == pytest.approx(4 / 3 * np.pi * r**3, rel=0.05)

    def test_volume_sign_tracks_orientation(self):
        mesh = extract_grid(np.ones((2, 2, 2), np.float32))
        assert mesh_volume(mesh) > 0

    def test_vertex_normals_unit_and_outward(self):
        vals, center = sphere_density(6.0)
        mesh = extract_grid(vals)
        normals = compute_vertex_normals(mesh)
        assert np.allclose(np.linalg.norm(normals, axis=1), 1.0)
        radial = mesh.vertices - center
        radial /= np.linalg.norm(radial, axis=1, keepdims=True)
        assert np.all(np.einsum("ij,ij->i", normals, radial) > 0.5)


class TestDensitySources:
    def test_mask_thresholding(self):
        mask = MaskVolume(np.zeros((2, 2, 2), np.uint8))
        mask.data[0, 0, 0] = 255
        grid = build_density_grid(mask, MCConfig())
        assert grid.values[0, 0, 0] == 1.0
        assert grid.values.sum() == 1.0
        assert grid.spacing == (1.0, 1.0, 1.0)

    def test_scan_thresholding_uses_config(self):
        vol = VoxelVolume(
            data=np.array([[[100, 128], [200, 127]]], np.uint8),
            spacing=(0.3, 0.3, 0.5),
        )
        grid = build_density_grid(vol, MCConfig(scan_threshold=128))
        assert grid.values.tolist() == [[[0.0, 1.0], [1.0, 0.0]]]
        assert grid.spacing == (0.3, 0.3, 0.5)

    def test_density_bounds_validated(self):
        with pytest.raises(ValueError):
            DensityGrid(np.full((1, 1, 1), 1.5, np.float32), (1, 1, 1))


class TestIncrementalUpdate:
    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_update_equals_batch(self, seed):
        rng = np.random.default_rng(seed)
        n = 8
        vals = (rng.random((n, n, n)) > 0.6).astype(np.float32)
        grid = DensityGrid(vals.copy(), (1.0, 1.0, 1.0))
        state = ExtractionState(shape=grid.values.shape, spacing=grid.spacing, iso=0.5)
        extract_isosurface(grid, state=state)

        # flip a random voxel box, re-march the region, compare to batch
        x0, y0, z0 = rng.integers(0, n, 3)
        x1 = int(rng.integers(x0, min(n, x0 + 3)))
        y1 = int(rng.integers(y0, min(n, y0 + 3)))
        z1 = int(rng.integers(z0, min(n, z0 + 3)))
        grid.values[z0 : z1 + 1, y0 : y1 + 1, x0 : x1 + 1] = (
            1.0 - grid.values[z0 : z1 + 1, y0 : y1 + 1, x0 : x1 + 1]
        )
        incr = update_region(grid, state, ((x0, x1), (y0, y1), (z0, z1)))
        batch = extract_isosurface(
            DensityGrid(grid.values.copy(), (1.0, 1.0, 1.0))
        )
        assert mesh_triangle_multiset(incr) == mesh_triangle_multiset(batch)

    def test_requires_complete_state(self):
        grid = DensityGrid(np.ones((2, 2, 2), np.float32), (1, 1, 1))
        state = ExtractionState(shape=(2, 2, 2), spacing=(1, 1, 1), iso=0.5)
        with pytest.raises(ValueError):
            update_region(grid, state, ((0, 0), (0, 0), (0, 0)))

    def test_out_of_range_box_rejected(self):
        grid = DensityGrid(np.ones((2, 2, 2), np.float32), (1, 1, 1))
        state = ExtractionState(shape=(2, 2, 2), spacing=(1, 1, 1), iso=0.5)
        extract_isosurface(grid, state=state)
        with pytest.raises(ValueError):
            update_region(grid, state, ((0, 2), (0, 0), (0, 0)))


class TestProgressAndCancellation:
    def test_progress_monotone_and_terminal(self):
        vals, _ = sphere_density(5.0, margin=2)
        events = []
        extract_grid(vals, config=MCConfig(yield_interval=100),
                     on_progress=events.append)
        assert events, "expected progress events"
        done = [e.cubes_done for e in events]
        assert done == sorted(done)
        last = events[-1]
        assert last.cubes_done == last.cubes_total
        assert not last.cancelled
        # exactly one terminal event
        assert sum(1 for e in events if e.cubes_done == e.cubes_total) == 1

    def test_progress_interval_bound(self):
        vals = np.zeros((6, 6, 6), np.float32)
        events = []
        extract_grid(vals, config=MCConfig(yield_interval=50),
                     on_progress=events.append)
        deltas = np.diff([0] + [e.cubes_done for e in events])
        assert all(d <= 50 for d in deltas)

    def test_cancellation_stops_promptly(self):
        vals = np.ones((10, 10, 10), np.float32)
        token = CancelToken()
        events = []

        def on_progress(ev):
            events.append(ev)
            if len(events) == 3:
                token.cancel()

        mesh = extract_grid(
            vals, config=MCConfig(yield_interval=20),
            on_progress=on_progress, cancel=token,
        )
        assert mesh.cancelled
        assert events[-1].cancelled
        # no more than one further chunk after the token fired
        fired_at = events[2].cubes_done
        assert events[-1].cubes_done <= fired_at + 20
        # exactly one terminal (cancelled) event
        assert sum(1 for e in events if e.cancelled) == 1

    def test_cancelled_token_before_start(self):
        token = CancelToken()
        token.cancel()
        mesh = extract_grid(np.ones((4, 4, 4), np.float32), cancel=token)
        assert mesh.cancelled


class TestDeterminism:
    def test_repeat_extraction_identical(self, rng):
        vals = (rng.random((6, 6, 6)) > 0.5).astype(np.float32)
        m1 = extract_grid(vals.copy())
        m2 = extract_grid(vals.copy())
        assert np.array_equal(m1.vertices, m2.vertices)
        assert np.array_equal(m1.triangles, m2.triangles)
