"""Shared test fixtures and independent oracles.

Oracles here deliberately avoid the library's own code paths: brute-force
rasterization, direct edge counting for watertightness, and sampled
point-to-triangle distances for Hausdorff bounds.
"""

import math
from collections import Counter, defaultdict

import numpy as np
from PIL import Image


# ---------------------------------------------------------------------------
# TIFF fixtures

def write_tiff_8(path, array):
    Image.fromarray(np.asarray(array, dtype=np.uint8), mode="L").save(
        path, format="TIFF"
    )


def write_tiff_16(path, array):
    arr = np.asarray(array, dtype=np.uint16)
    img = Image.new("I;16", (arr.shape[1], arr.shape[0]))
    img.frombytes(arr.astype("<u2").tobytes())
    img.save(path, format="TIFF")


def make_stack(directory, slices, bit_depth=8, basename="slice"):
    """Write a list of 2D arrays as an ordered TIFF stack; returns paths."""
    paths = []
    for k, arr in enumerate(slices):
        p = directory / f"{basename}_{k:04d}.tif"
        if bit_depth == 8:
            write_tiff_8(p, arr)
        else:
            write_tiff_16(p, arr)
        paths.append(str(p))
    return paths


# ---------------------------------------------------------------------------
# geometry fixtures

def sphere_density(radius, margin=4, graded=True):
    """Digitized sphere density grid values, shape (n, n, n)."""
    n = int(2 * radius) + 2 * margin + 1
    zz, yy, xx = np.mgrid[0:n, 0:n, 0:n]
    c = (n - 1) / 2.0
    dist = np.sqrt((xx - c) ** 2 + (yy - c) ** 2 + (zz - c) ** 2)
    if graded:
        vals = np.clip(0.5 + (radius - dist), 0.0, 1.0)
    else:
        vals = (dist <= radius).astype(np.float64)
    return vals.astype(np.float32), np.array([c, c, c])


def ellipsoid_grid(rng, max_n=12):
    """Random digitized ellipsoid (binary, simply connected)."""
    n = int(rng.integers(6, max_n + 1))
    radii = rng.uniform(1.5, (n - 2) / 2.0, size=3)
    c = (n - 1) / 2.0
    zz, yy, xx = np.mgrid[0:n, 0:n, 0:n]
    vals = (
        ((xx - c) / radii[0]) ** 2
        + ((yy - c) / radii[1]) ** 2
        + ((zz - c) / radii[2]) ** 2
    ) <= 1.0
    return vals.astype(np.float32)


# ---------------------------------------------------------------------------
# mesh oracles

def edge_counter(mesh):
    ed = Counter()
    for t in mesh.triangles:
        a, b, c = int(t[0]), int(t[1]), int(t[2])
        for u, v in ((a, b), (b, c), (c, a)):
            ed[(min(u, v), max(u, v))] += 1
    return ed


def is_watertight(mesh):
    """Every undirected edge borders exactly two triangles."""
    if mesh.triangle_count == 0:
        return True
    return all(c == 2 for c in edge_counter(mesh).values())


def component_euler_characteristics(mesh):
    """V - E + F per connected component of the triangle mesh."""
    if mesh.triangle_count == 0:
        return []
    parent = list(range(len(mesh.vertices)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb

    for t in mesh.triangles:
        union(int(t[0]), int(t[1]))
        union(int(t[1]), int(t[2]))
    verts = defaultdict(set)
    faces = defaultdict(int)
    edges = defaultdict(set)
    for t in mesh.triangles:
        a, b, c = int(t[0]), int(t[1]), int(t[2])
        root = find(a)
        faces[root] += 1
        verts[root].update((a, b, c))
        for u, v in ((a, b), (b, c), (c, a)):
            edges[root].add((min(u, v), max(u, v)))
    return [
        len(verts[r]) - len(edges[r]) + faces[r] for r in sorted(faces)
    ]


def mesh_triangle_multiset(mesh, decimals=9):
    """Canonical multiset of triangles by rounded vertex coordinates."""
    out = Counter()
    pts = mesh.vertices[mesh.triangles]
    for tri in np.round(pts, decimals):
        corners = sorted(map(tuple, tri))
        out[tuple(corners)] += 1
    return out


def point_triangle_distance(p, a, b, c):
    """Exact distance from point p to triangle abc (Eberly-style)."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.dot(ab, ap)
    d2 = np.dot(ac, ap)
    if d1 <= 0 and d2 <= 0:
        return np.linalg.norm(ap)
    bp = p - b
    d3 = np.dot(ab, bp)
    d4 = np.dot(ac, bp)
    if d3 >= 0 and d4 <= d3:
        return np.linalg.norm(bp)
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        t = d1 / (d1 - d3)
        return np.linalg.norm(ap - t * ab)
    cp = p - c
    d5 = np.dot(ab, cp)
    d6 = np.dot(ac, cp)
    if d6 >= 0 and d5 <= d6:
        return np.linalg.norm(cp)
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        t = d2 / (d2 - d6)
        return np.linalg.norm(ap - t * ac)
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return np.linalg.norm(bp - t * (c - b))
    denom = va + vb + vc
    v = vb / denom
    w = vc / denom
    return np.linalg.norm(p - (a + ab * v + ac * w))


def surface_samples(mesh, per_tri=4, seed=0):
    """Vertices plus random barycentric samples on every triangle."""
    rng = np.random.default_rng(seed)
    p = mesh.vertices[mesh.triangles]
    pts = [mesh.vertices]
    for _ in range(per_tri):
        u = rng.random((len(p), 1))
        v = rng.random((len(p), 1))
        flip = (u + v) > 1
        u[flip] = 1 - u[flip]
        v[flip] = 1 - v[flip]
        pts.append(p[:, 0] * (1 - u - v) + p[:, 1] * u + p[:, 2] * v)
    return np.vstack(pts)


def _point_triangle_distances_vec(p, a, b, c):
    """Vectorized exact point-to-triangle distance for matched rows."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    out = np.full(len(p), np.inf)
    done = np.zeros(len(p), dtype=bool)

    def settle(mask, closest):
        hit = mask & ~done
        if hit.any():
            out[hit] = np.linalg.norm(p[hit] - closest[hit], axis=1)
            done[hit] = True

    settle((d1 <= 0) & (d2 <= 0), a)
    settle((d3 >= 0) & (d4 <= d3), b)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ab = np.where(d1 != d3, d1 / (d1 - d3), 0.0)
        settle((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + t_ab[:, None] * ab)
        settle((d6 >= 0) & (d5 <= d6), c)
        t_ac = np.where(d2 != d6, d2 / (d2 - d6), 0.0)
        settle((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + t_ac[:, None] * ac)
        denom_bc = (d4 - d3) + (d5 - d6)
        t_bc = np.where(denom_bc != 0, (d4 - d3) / denom_bc, 0.0)
        settle(
            (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0),
            b + t_bc[:, None] * (c - b),
        )
        denom = va + vb + vc
        denom = np.where(denom == 0, 1.0, denom)
        v = vb / denom
        w = vc / denom
    settle(np.ones(len(p), dtype=bool), a + v[:, None] * ab + w[:, None] * ac)
    return out


def point_to_mesh_distances(points, mesh, k=12):
    """Exact point-to-triangle distance to the k nearest triangles."""
    from scipy.spatial import cKDTree

    p = mesh.vertices[mesh.triangles]
    centroids = p.mean(axis=1)
    tree = cKDTree(centroids)
    k = min(k, len(centroids))
    _, idx = tree.query(points, k=k)
    if k == 1:
        idx = idx[:, None]
    n = len(points)
    flat = idx.reshape(-1)
    pts = np.repeat(np.asarray(points, dtype=np.float64), k, axis=0)
    d = _point_triangle_distances_vec(
        pts, p[flat, 0], p[flat, 1], p[flat, 2]
    )
    return d.reshape(n, k).min(axis=1)


def sampled_hausdorff(mesh_a, mesh_b, per_tri=4, seed=0):
    """Symmetric sampled Hausdorff distance (point-to-triangle, exact)."""
    sa = surface_samples(mesh_a, per_tri, seed)
    sb = surface_samples(mesh_b, per_tri, seed + 1)
    d_ab = point_to_mesh_distances(sa, mesh_b).max()
    d_ba = point_to_mesh_distances(sb, mesh_a).max()
    return max(d_ab, d_ba)


# ---------------------------------------------------------------------------
# rasterization oracles

def brute_force_disc(center, radius, width, height, slack=1e-9):
    """All pixels whose center is within radius of a point."""
    cx, cy = center
    r = radius + slack
    out = set()
    for y in range(height):
        for x in range(width):
            if (x + 0.5 - cx) ** 2 + (y + 0.5 - cy) ** 2 <= r * r:
                out.add((x, y))
    return out


def brute_force_polyline(points, radius, width, height, slack=1e-9):
    """All pixels whose center is within radius of a polyline (full scan)."""
    r = radius + slack
    r2 = r * r
    out = set()
    segs = list(zip(points, points[1:])) if len(points) > 1 else []
    for y in range(height):
        cy = y + 0.5
        for x in range(width):
            cx = x + 0.5
            hit = False
            if not segs:
                px, py = points[0]
                hit = (cx - px) ** 2 + (cy - py) ** 2 <= r2
            for (x0, y0), (x1, y1) in segs:
                dx, dy = x1 - x0, y1 - y0
                len2 = dx * dx + dy * dy
                if len2 == 0:
                    qx, qy = cx - x0, cy - y0
                else:
                    t = ((cx - x0) * dx + (cy - y0) * dy) / len2
                    t = min(max(t, 0.0), 1.0)
                    qx, qy = cx - (x0 + t * dx), cy - (y0 + t * dy)
                if qx * qx + qy * qy <= r2:
                    hit = True
                    break
            if hit:
                out.add((x, y))
    return out


def capsule_pixels_vectorized(points, radius, width, height, slack=1e-9):
    """Numpy brute-force polyline rasterization over the whole slice."""
    xs = np.arange(width) + 0.5
    ys = np.arange(height) + 0.5
    cx, cy = np.meshgrid(xs, ys)
    r2 = (radius + slack) ** 2
    hit = np.zeros((height, width), dtype=bool)
    if len(points) == 1:
        px, py = points[0]
        hit |= (cx - px) ** 2 + (cy - py) ** 2 <= r2
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        dx, dy = x1 - x0, y1 - y0
        len2 = dx * dx + dy * dy
        if len2 == 0:
            hit |= (cx - x0) ** 2 + (cy - y0) ** 2 <= r2
            continue
        t = np.clip(((cx - x0) * dx + (cy - y0) * dy) / len2, 0.0, 1.0)
        qx = x0 + t * dx - cx
        qy = y0 + t * dy - cy
        hit |= qx * qx + qy * qy <= r2
    return {(int(x), int(y)) for y, x in zip(*np.nonzero(hit))}


def trilinear_density(padded, p):
    """Trilinear interpolation of the padded density grid at sample coords."""
    x, y, z = p
    i0, j0, k0 = int(np.floor(x)), int(np.floor(y)), int(np.floor(z))
    i0 = min(max(i0, 0), padded.shape[2] - 2)
    j0 = min(max(j0, 0), padded.shape[1] - 2)
    k0 = min(max(k0, 0), padded.shape[0] - 2)
    fx, fy, fz = x - i0, y - j0, z - k0
    c = padded[k0 : k0 + 2, j0 : j0 + 2, i0 : i0 + 2].astype(np.float64)
    c = c[0] * (1 - fz) + c[1] * fz
    c = c[0] * (1 - fy) + c[1] * fy
    return float(c[0] * (1 - fx) + c[1] * fx)


def random_canvas(rng, pixel_dims, axis="axial", index=0):
    """Random rigid canvas pose with the given pixel dimensions."""
    from voxelink.annotation import CanvasPlane

    # random orthonormal u, v via QR
    m = rng.normal(size=(3, 3))
    q, r = np.linalg.qr(m)
    u = q[:, 0]
    v = q[:, 1]
    origin = rng.uniform(-50, 50, size=3)
    width = float(rng.uniform(20, 200))
    height = float(rng.uniform(20, 200))
    return CanvasPlane(
        origin=origin,
        u_axis=u / np.linalg.norm(u),
        v_axis=v / np.linalg.norm(v),
        width_mm=width,
        height_mm=height,
        axis=axis,
        index=index,
        pixel_dims=tuple(pixel_dims),
    )


def ray_hitting_pixel(canvas, px, py, rng=None, oblique=False):
    """Build a stylus sample whose ray hits pixel coordinate (px, py)."""
    from voxelink.annotation import StylusSample

    pw, ph = canvas.pixel_dims
    target = (
        canvas.origin
        + (px / pw) * canvas.width_mm * canvas.u_axis
        + (py / ph) * canvas.height_mm * canvas.v_axis
    )
    n = canvas.normal
    if oblique and rng is not None:
        offset = rng.uniform(5, 40) * n + rng.uniform(-10, 10, 3)
        if np.dot(offset, n) <= 1e-3:
            offset = offset - 2 * np.dot(offset, n) * n + n
        tip = target + offset
    else:
        tip = target + 10.0 * n
    d = target - tip
    d = d / np.linalg.norm(d)
    return StylusSample(tip=tip, direction=d, pressed=True)
