"""Iso-surface extraction on binary density grids.

The 256-entry case table is generated at import time from the cube
geometry. Ambiguous faces (diagonal inside corners) are always resolved by
separating the inside corners, and cube patches are triangulated without
chords that lie in a cube face, so adjacent cells agree edge-for-edge and
the output is watertight for any zero-padded grid.

Cell (i, j, k) of the padded lattice spans samples (i-1 .. i) per axis in
voxel coordinates; sample p sits at p * spacing millimeters. Extraction
iterates cells in x-fastest order and is chunked: after every
``yield_interval`` cells a progress event fires and cancellation is
honored.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from .volume import MaskVolume, VoxelVolume

# ---------------------------------------------------------------------------
# cube geometry and case table generation

# corner c has offsets ((c&1), (c>>1)&1, (c>>2)&1)
CORNER_OFFSETS = [((c & 1), (c >> 1) & 1, (c >> 2) & 1) for c in range(8)]

# 12 cube edges as (low corner, high corner, axis); high = low | (1 << axis)
EDGES: List[Tuple[int, int, int]] = []
for _a in range(8):
    for _axis in range(3):
        if not (_a >> _axis) & 1:
            EDGES.append((_a, _a | (1 << _axis), _axis))

# faces: (axis, side, corner list, outward normal)
_FACES = []
for _axis in range(3):
    for _side in (0, 1):
        corners = [c for c in range(8) if CORNER_OFFSETS[c][_axis] == _side]
        n = [0.0, 0.0, 0.0]
        n[_axis] = 1.0 if _side else -1.0
        _FACES.append((_axis, _side, corners, tuple(n)))

_FACE_EDGE_IDS = []
for (_axis, _side, _corners, _n) in _FACES:
    cs = set(_corners)
    _FACE_EDGE_IDS.append(
        [i for i, (a, b, ax) in enumerate(EDGES) if a in cs and b in cs]
    )

# the two faces each cube edge lies on
_EDGE_FACES = [
    frozenset(fi for fi, fe in enumerate(_FACE_EDGE_IDS) if e in fe)
    for e in range(12)
]


def _edge_midpoint(e: int) -> Tuple[float, float, float]:
    a, b, _ = EDGES[e]
    pa, pb = CORNER_OFFSETS[a], CORNER_OFFSETS[b]
    return tuple((pa[i] + pb[i]) / 2.0 for i in range(3))


def _cross(u, v):
    return (
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    )


def _dot(u, v):
    return u[0] * v[0] + u[1] * v[1] + u[2] * v[2]


def _triangulate_loop(loop: Tuple[int, ...]) -> List[Tuple[int, int, int]]:
    """Triangulate a surface loop avoiding chords that lie in a cube face.

    A chord between two cut edges sharing a face would be coplanar with the
    neighboring cell's geometry and can collide with its triangulation;
    restricting chords to the cube interior keeps the global mesh 2-manifold.
    """
    n = len(loop)
    if n == 3:
        return [loop]

    def chord_ok(seq, i, j):
        if (j - i) in (1, n - 1):
            return True
        return not (_EDGE_FACES[seq[i]] & _EDGE_FACES[seq[j]])

    for rot in range(n):
        seq = loop[rot:] + loop[:rot]

        def solve(i, j):
            if j - i < 2:
                return []
            if j - i == 2:
                return [(i, i + 1, j)]
            for k in range(i + 1, j):
                if chord_ok(seq, i, k) and chord_ok(seq, k, j):
                    left = solve(i, k)
                    if left is None:
                        continue
                    right = solve(k, j)
                    if right is None:
                        continue
                    return left + right + [(i, k, j)]
            return None

        res = solve(0, n - 1)
        if res is not None:
            return [(seq[a], seq[b], seq[c]) for (a, b, c) in res]
    raise AssertionError(f"loop {loop} admits no face-safe triangulation")


def _build_case(case: int) -> List[Tuple[int, int, int]]:
    """Triangles (as local edge id triples) for one corner sign pattern."""
    inside = [(case >> c) & 1 for c in range(8)]
    succ: Dict[int, int] = {}
    for fi, (axis, side, corners, nf) in enumerate(_FACES):
        cut = [
            e for e in _FACE_EDGE_IDS[fi]
            if inside[EDGES[e][0]] != inside[EDGES[e][1]]
        ]
        if not cut:
            continue
        segs = []
        if len(cut) == 2:
            ic = [CORNER_OFFSETS[c] for c in corners if inside[c]]
            ref = tuple(sum(p[i] for p in ic) / len(ic) for i in range(3))
            segs.append((cut[0], cut[1], ref))
        else:
            # ambiguous face: one segment around each inside corner
            for c in corners:
                if not inside[c]:
                    continue
                pair = [e for e in cut if c in EDGES[e][:2]]
                segs.append((pair[0], pair[1], tuple(map(float, CORNER_OFFSETS[c]))))
        for e0, e1, ref in segs:
            p0, p1 = _edge_midpoint(e0), _edge_midpoint(e1)
            d = tuple(p1[i] - p0[i] for i in range(3))
            side_vec = _cross(nf, d)
            mid = tuple((p0[i] + p1[i]) / 2.0 for i in range(3))
            to_inside = tuple(ref[i] - mid[i] for i in range(3))
            if _dot(side_vec, to_inside) > 0:
                e0, e1 = e1, e0
            succ[e0] = e1
    loops = []
    remaining = set(succ)
    while remaining:
        start = min(remaining)
        loop = [start]
        remaining.discard(start)
        cur = succ[start]
        while cur != start:
            loop.append(cur)
            remaining.discard(cur)
            cur = succ[cur]
        loops.append(tuple(loop))
    tris: List[Tuple[int, int, int]] = []
    for loop in sorted(loops):
        tris.extend(_triangulate_loop(loop))
    return tris


CASE_TABLE: List[List[Tuple[int, int, int]]] = [_build_case(c) for c in range(256)]

# per-case arrays of local-edge components for vectorized emission
_CASE_DX = []
_CASE_DY = []
_CASE_DZ = []
_CASE_AX = []
for _tris in CASE_TABLE:
    if _tris:
        arr = np.array(_tris, dtype=np.int64)  # (ntri, 3) local edge ids
        low = np.array([EDGES[e][0] for e in arr.ravel()]).reshape(arr.shape)
        _CASE_DX.append((low & 1).astype(np.int64))
        _CASE_DY.append(((low >> 1) & 1).astype(np.int64))
        _CASE_DZ.append(((low >> 2) & 1).astype(np.int64))
        _CASE_AX.append(
            np.array([EDGES[e][2] for e in arr.ravel()], dtype=np.int64).reshape(arr.shape)
        )
    else:
        _CASE_DX.append(None)
        _CASE_DY.append(None)
        _CASE_DZ.append(None)
        _CASE_AX.append(None)


# ---------------------------------------------------------------------------
# domain types

@dataclass
class MCConfig:
    iso_level: float = 0.5
    yield_interval: int = 1000
    scan_threshold: int = 128

    def __post_init__(self):
        if not 0.0 < self.iso_level < 1.0:
            raise ValueError("iso_level must be in (0, 1)")
        if self.yield_interval < 1:
            raise ValueError("yield_interval must be >= 1")


@dataclass
class DensityGrid:
    """Scalar field in [0, 1] on the voxel lattice, shape (nz, ny, nx)."""

    values: np.ndarray
    spacing: Tuple[float, float, float]
    source: str = "mask"

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.values.ndim != 3:
            raise ValueError("density grid must be 3D")
        if self.values.min() < 0.0 or self.values.max() > 1.0:
            raise ValueError("density values must lie in [0, 1]")

    @property
    def dims(self) -> Tuple[int, int, int]:
        nz, ny, nx = self.values.shape
        return (nx, ny, nz)


@dataclass
class ExtractionProgress:
    cubes_done: int
    cubes_total: int
    partial_triangles: int
    cancelled: bool = False


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) float64, mm
    triangles: np.ndarray  # (T, 3) int32
    normals: Optional[np.ndarray] = None
    cancelled: bool = False

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int32).reshape(-1, 3)
        if len(self.triangles) and self.triangles.max() >= len(self.vertices):
            raise ValueError("triangle index out of range")

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)

    @classmethod
    def empty(cls) -> "TriangleMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int32))


class CancelToken:
    """Cooperative cancellation flag, settable from any thread."""

    def __init__(self):
        self._event = threading.Event()

    def cancel(self):
        self._event.set()

    def is_set(self) -> bool:
        return self._event.is_set()


@dataclass
class ExtractionState:
    """Per-cell triangle records enabling regional re-extraction."""

    shape: Tuple[int, int, int]  # grid (nz, ny, nx)
    spacing: Tuple[float, float, float]
    iso: float
    cube_tris: Dict[int, np.ndarray] = field(default_factory=dict)  # flat cell -> (n,3) edge ids
    cubes_done: int = 0
    cubes_total: int = 0
    cancelled: bool = False
    complete: bool = False


# ---------------------------------------------------------------------------
# operations

def build_density_grid(
    source: Union[VoxelVolume, MaskVolume],
    config: MCConfig,
    spacing: Optional[Tuple[float, float, float]] = None,
) -> DensityGrid:
    """Threshold a volume or mask into a binary density grid."""
    if isinstance(source, MaskVolume):
        values = (source.data == 255).astype(np.float32)
        return DensityGrid(values, spacing or (1.0, 1.0, 1.0), source="mask")
    values = (source.data >= config.scan_threshold).astype(np.float32)
    return DensityGrid(values, spacing or source.spacing, source="scan")


def march_cube(
    corner_densities,
    corner_positions,
    iso: float,
) -> List[np.ndarray]:
    """March one cube; returns 0..5 triangles as (3, 3) point arrays.

    Corner k carries offsets ((k&1), (k>>1)&1, (k>>2)&1). A corner exactly
    equal to iso counts as outside. Vertices interpolate linearly along cut
    edges; winding makes normals point from high to low density.
    """
    d = [float(v) for v in corner_densities]
    pos = [np.asarray(p, dtype=np.float64) for p in corner_positions]
    case = 0
    for c in range(8):
        if d[c] > iso:
            case |= 1 << c
    out = []
    for tri in CASE_TABLE[case]:
        pts = []
        for e in tri:
            a, b, _axis = EDGES[e]
            t = (iso - d[a]) / (d[b] - d[a])
            pts.append(pos[a] + t * (pos[b] - pos[a]))
        out.append(np.stack(pts))
    return out


def _padded(grid: DensityGrid) -> np.ndarray:
    nz, ny, nx = grid.values.shape
    P = np.zeros((nz + 2, ny + 2, nx + 2), dtype=np.float32)
    P[1:-1, 1:-1, 1:-1] = grid.values
    return P


def _gather_padded(values: np.ndarray, k, j, i) -> np.ndarray:
    """Sample the zero-padded grid at padded coords without materializing it."""
    nz, ny, nx = values.shape
    ii, jj, kk = i - 1, j - 1, k - 1
    valid = (
        (ii >= 0) & (ii < nx) & (jj >= 0) & (jj < ny) & (kk >= 0) & (kk < nz)
    )
    out = np.zeros(len(ii), dtype=np.float64)
    if valid.any():
        out[valid] = values[kk[valid], jj[valid], ii[valid]]
    return out


def _cell_cases_slab(bits: np.ndarray, k: int) -> np.ndarray:
    """Corner sign pattern for every cell of slab k (shape (CY, CX))."""
    _, ny2, nx2 = bits.shape
    cy, cx = ny2 - 1, nx2 - 1
    case = np.zeros((cy, cx), dtype=np.uint8)
    for c, (dx, dy, dz) in enumerate(CORNER_OFFSETS):
        case |= (bits[k + dz, dy : dy + cy, dx : dx + cx] << c).astype(np.uint8)
    return case


def _emit_cells(
    state: ExtractionState,
    case_flat: np.ndarray,
    flat_base: int,
    cx: int,
    cy: int,
) -> int:
    """Record triangles for one chunk of cells; returns triangles added."""
    nz, ny, nx = state.shape
    nx2, ny2 = nx + 2, ny + 2
    active = np.nonzero((case_flat != 0) & (case_flat != 255))[0]
    added = 0
    if len(active) == 0:
        return 0
    flat = active + flat_base
    ii = flat % cx
    jj = (flat // cx) % cy
    kk = flat // (cx * cy)
    cases = case_flat[active]
    for case in np.unique(cases):
        dx, dy, dz, ax = _CASE_DX[case], _CASE_DY[case], _CASE_DZ[case], _CASE_AX[case]
        sel = cases == case
        ci, cj, ck = ii[sel], jj[sel], kk[sel]
        # global edge id = sample_flat * 3 + axis, sample in padded coords
        eids = (
            ((ck[:, None, None] + dz) * ny2 + (cj[:, None, None] + dy)) * nx2
            + (ci[:, None, None] + dx)
        ) * 3 + ax
        fsel = flat[sel]
        for n in range(len(fsel)):
            state.cube_tris[int(fsel[n])] = eids[n]
            added += eids[n].shape[0]
    return added


def assemble_mesh(grid: DensityGrid, state: ExtractionState) -> TriangleMesh:
    """Build the indexed mesh from per-cell records, deterministically.

    Cells are visited in flat (x-fastest) order; vertices are numbered by
    sorted global edge id, so identical states produce identical arrays.
    """
    if not state.cube_tris:
        return TriangleMesh.empty()
    keys = sorted(state.cube_tris)
    tri_eids = np.concatenate([state.cube_tris[k] for k in keys], axis=0)
    uniq, inverse = np.unique(tri_eids.ravel(), return_inverse=True)
    triangles = inverse.reshape(-1, 3).astype(np.int32)

    nz, ny, nx = state.shape
    nx2, ny2 = nx + 2, ny + 2
    axis = uniq % 3
    s = uniq // 3
    i = s % nx2
    j = (s // nx2) % ny2
    k = s // (nx2 * ny2)
    da = _gather_padded(grid.values, k, j, i)
    db = _gather_padded(
        grid.values, k + (axis == 2), j + (axis == 1), i + (axis == 0)
    )
    t = (state.iso - da) / (db - da)
    sx, sy, sz = state.spacing
    verts = np.empty((len(uniq), 3), dtype=np.float64)
    verts[:, 0] = ((i - 1) + t * (axis == 0)) * sx
    verts[:, 1] = ((j - 1) + t * (axis == 1)) * sy
    verts[:, 2] = ((k - 1) + t * (axis == 2)) * sz
    return TriangleMesh(verts, triangles, cancelled=state.cancelled)


def extract_isosurface(
    grid: DensityGrid,
    config: Optional[MCConfig] = None,
    on_progress: Optional[Callable[[ExtractionProgress], None]] = None,
    cancel: Optional[CancelToken] = None,
    state: Optional[ExtractionState] = None,
) -> TriangleMesh:
    """Extract the full iso-surface, chunked and cancellable.

    Returns a partial mesh flagged ``cancelled`` when the token fires;
    otherwise the complete watertight surface. Pass ``state`` to retain the
    per-cell records needed by :func:`update_region`.
    """
    config = config or MCConfig()
    nz, ny, nx = grid.values.shape
    if state is None:
        state = ExtractionState(
            shape=(nz, ny, nx), spacing=grid.spacing, iso=config.iso_level
        )
    else:
        state.shape = (nz, ny, nx)
        state.spacing = grid.spacing
        state.iso = config.iso_level
        state.cube_tris.clear()
        state.cancelled = False
        state.complete = False
    cx, cy, cz = nx + 1, ny + 1, nz + 1
    total = cx * cy * cz
    state.cubes_total = total
    state.cubes_done = 0

    P = _padded(grid)
    bits = (P > config.iso_level).astype(np.uint8)

    triangles = 0
    done = 0
    step = config.yield_interval
    cancelled = False
    for k in range(cz):
        slab = _cell_cases_slab(bits, k).ravel()  # x-fastest within slab
        slab_base = k * cx * cy
        pos = 0
        while pos < len(slab):
            chunk = slab[pos : pos + step]
            triangles += _emit_cells(state, chunk, slab_base + pos, cx, cy)
            pos += len(chunk)
            done = slab_base + pos
            state.cubes_done = done
            if on_progress is not None and done < total:
                on_progress(ExtractionProgress(done, total, triangles))
            if cancel is not None and cancel.is_set():
                cancelled = True
                break
        if cancelled:
            break
    state.cancelled = cancelled
    state.complete = not cancelled
    if on_progress is not None:
        on_progress(ExtractionProgress(state.cubes_done, total, triangles, cancelled))
    return assemble_mesh(grid, state)


def update_region(
    grid: DensityGrid,
    state: ExtractionState,
    changed: Tuple[Tuple[int, int], Tuple[int, int], Tuple[int, int]],
    config: Optional[MCConfig] = None,
) -> TriangleMesh:
    """Re-march only the cells touching a changed voxel box (inclusive,
    ((x0,x1),(y0,y1),(z0,z1))), dilated by one voxel; returns the full mesh,
    identical to a from-scratch extraction of the updated grid."""
    config = config or MCConfig()
    if not state.complete:
        raise ValueError("update_region requires a completed extraction state")
    nz, ny, nx = grid.values.shape
    (x0, x1), (y0, y1), (z0, z1) = changed
    if x1 < x0 or y1 < y0 or z1 < z0:
        return assemble_mesh(grid, state)
    if not (0 <= x0 and x1 < nx and 0 <= y0 and y1 < ny and 0 <= z0 and z1 < nz):
        raise ValueError(f"changed box {changed} outside grid {grid.dims}")
    # voxel v contributes to cells v and v+1 per axis; dilate by 1 more
    ci0, ci1 = max(0, x0 - 1), min(nx, x1 + 2)
    cj0, cj1 = max(0, y0 - 1), min(ny, y1 + 2)
    ck0, ck1 = max(0, z0 - 1), min(nz, z1 + 2)

    # local zero-padded sample block covering the dilated cell box only;
    # cell (i, j, k) needs padded samples (i..i+1, j..j+1, k..k+1)
    loc = np.zeros(
        (ck1 - ck0 + 2, cj1 - cj0 + 2, ci1 - ci0 + 2), dtype=np.float32
    )
    vx0, vx1 = max(ci0 - 1, 0), min(ci1, nx - 1)
    vy0, vy1 = max(cj0 - 1, 0), min(cj1, ny - 1)
    vz0, vz1 = max(ck0 - 1, 0), min(ck1, nz - 1)
    loc[
        vz0 - (ck0 - 1) : vz1 - (ck0 - 1) + 1,
        vy0 - (cj0 - 1) : vy1 - (cj0 - 1) + 1,
        vx0 - (ci0 - 1) : vx1 - (ci0 - 1) + 1,
    ] = grid.values[vz0 : vz1 + 1, vy0 : vy1 + 1, vx0 : vx1 + 1]
    bits = (loc > config.iso_level).astype(np.uint8)
    cx, cy = nx + 1, ny + 1
    h, w = cj1 - cj0 + 1, ci1 - ci0 + 1
    for k in range(ck0, ck1 + 1):
        case = np.zeros((h, w), dtype=np.uint8)
        for c, (dx, dy, dz) in enumerate(CORNER_OFFSETS):
            case |= (
                bits[k - ck0 + dz, dy : dy + h, dx : dx + w] << c
            ).astype(np.uint8)
        for jj in range(case.shape[0]):
            row = case[jj]
            base = (k * cy + (cj0 + jj)) * cx + ci0
            # drop stale records, then re-emit active cells of this row
            for ii in range(case.shape[1]):
                state.cube_tris.pop(base + ii, None)
            _emit_cells(state, row, base, cx, cy)
    return assemble_mesh(grid, state)


def mesh_area(mesh: TriangleMesh) -> float:
    """Total surface area in mm^2."""
    if mesh.triangle_count == 0:
        return 0.0
    p = mesh.vertices[mesh.triangles]
    cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    return float(np.linalg.norm(cross, axis=1).sum() / 2.0)


def mesh_volume(mesh: TriangleMesh) -> float:
    """Signed enclosed volume in mm^3 (positive for outward normals)."""
    if mesh.triangle_count == 0:
        return 0.0
    p = mesh.vertices[mesh.triangles]
    return float(np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2])).sum() / 6.0)


def compute_vertex_normals(mesh: TriangleMesh) -> np.ndarray:
    """Area-weighted unit vertex normals."""
    normals = np.zeros_like(mesh.vertices)
    p = mesh.vertices[mesh.triangles]
    fn = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    for c in range(3):
        np.add.at(normals, mesh.triangles[:, c], fn)
    lens = np.linalg.norm(normals, axis=1)
    lens[lens == 0] = 1.0
    return normals / lens[:, None]
