"""Mesh reduction: vertex dedupe, quadric edge-collapse decimation, LOD.

Decimation is the classical plane-sum quadric scheme: each vertex carries
the area-weighted sum of squared point-to-plane distances of its incident
triangles; edges collapse greedily by minimal cost at the position solving
the quadric's normal equations. Boundary rims are pinned with penalty
quadrics. A lazy-invalidation heap keeps acceptance order consistent with
candidate costs.
"""

from __future__ import annotations

import heapq
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from .errors import IoError
from .surface import TriangleMesh

log = logging.getLogger(__name__)

_DET_EPS = 1e-12
_BOUNDARY_WEIGHT = 1000.0


@dataclass
class DecimationConfig:
    target_ratio: float = 0.25  # fraction of triangles to keep
    preserve_topology: bool = True
    max_normal_flip_deg: float = 90.0

    def __post_init__(self):
        if not 0.0 < self.target_ratio <= 1.0:
            raise ValueError("target_ratio must be in (0, 1]")


@dataclass
class CollapseCandidate:
    edge: Tuple[int, int]
    cost: float
    target: np.ndarray


@dataclass
class DecimationResult:
    mesh: TriangleMesh
    target_reached: bool
    collapses: int = 0


@dataclass
class LodLadder:
    levels: List[Tuple[TriangleMesh, float]]  # (mesh, min_distance mm), ascending

    def __post_init__(self):
        if not self.levels:
            raise ValueError("ladder needs at least one level")
        if self.levels[0][1] != 0:
            raise ValueError("level 0 must start at distance 0")
        dists = [d for _, d in self.levels]
        if any(b <= a for a, b in zip(dists, dists[1:])):
            raise ValueError("level distances must strictly increase")


def dedupe_vertices(mesh: TriangleMesh, epsilon: float = 0.0) -> TriangleMesh:
    """Merge vertices within epsilon (lattice snap) and drop degenerate tris."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    verts = mesh.vertices
    if len(verts) == 0:
        return TriangleMesh.empty()
    if epsilon == 0.0:
        keys = verts
    else:
        keys = np.round(verts / epsilon)
    _, first_idx, inverse = np.unique(
        keys, axis=0, return_index=True, return_inverse=True
    )
    # renumber groups by first occurrence so an already-unique mesh is unchanged
    order = np.argsort(first_idx, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    new_ids = rank[inverse]
    new_verts = verts[np.sort(first_idx)]
    tris = new_ids[mesh.triangles]
    ok = (
        (tris[:, 0] != tris[:, 1])
        & (tris[:, 1] != tris[:, 2])
        & (tris[:, 0] != tris[:, 2])
    )
    return TriangleMesh(new_verts, tris[ok].astype(np.int32))


def _triangle_planes(verts: np.ndarray, tris: np.ndarray):
    """Unit plane equations and areas; zero-area triangles get area 0."""
    p = verts[tris]
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    norms = np.linalg.norm(n, axis=1)
    areas = norms / 2.0
    safe = norms.copy()
    safe[safe == 0] = 1.0
    unit = n / safe[:, None]
    d = -np.einsum("ij,ij->i", unit, p[:, 0])
    return np.concatenate([unit, d[:, None]], axis=1), areas


def compute_vertex_quadrics(mesh: TriangleMesh) -> np.ndarray:
    """Area-weighted plane-sum quadric per vertex, shape (V, 4, 4).

    Zero-area triangles are skipped (logged). Boundary edges add a penalty
    quadric perpendicular to the adjacent triangle so open rims do not
    shrink.
    """
    verts, tris = mesh.vertices, mesh.triangles
    quadrics = np.zeros((len(verts), 4, 4), dtype=np.float64)
    if len(tris) == 0:
        return quadrics
    planes, areas = _triangle_planes(verts, tris)
    degenerate = areas <= 0
    if degenerate.any():
        log.warning("skipping %d zero-area triangles in quadric accumulation",
                    int(degenerate.sum()))
    K = areas[:, None, None] * np.einsum("ij,ik->ijk", planes, planes)
    K[degenerate] = 0.0
    for c in range(3):
        np.add.at(quadrics, tris[:, c], K)

    # boundary rim penalties
    edges: Dict[Tuple[int, int], List[int]] = {}
    for t, (a, b, c) in enumerate(tris):
        for u, v in ((a, b), (b, c), (c, a)):
            key = (u, v) if u < v else (v, u)
            edges.setdefault(key, []).append(t)
    edge_lengths = [
        float(np.linalg.norm(verts[u] - verts[v])) for (u, v) in edges
    ]
    mean_len = float(np.mean(edge_lengths)) if edge_lengths else 0.0
    for (u, v), owners in edges.items():
        if len(owners) != 1 or mean_len == 0.0:
            continue
        t = owners[0]
        if degenerate[t]:
            continue
        edge_dir = verts[v] - verts[u]
        elen = np.linalg.norm(edge_dir)
        if elen == 0:
            continue
        n = np.cross(edge_dir / elen, planes[t, :3])
        nlen = np.linalg.norm(n)
        if nlen == 0:
            continue
        n = n / nlen
        d = -float(np.dot(n, verts[u]))
        p = np.append(n, d)
        Kb = _BOUNDARY_WEIGHT * mean_len * np.outer(p, p)
        quadrics[u] += Kb
        quadrics[v] += Kb
    return quadrics


def quadric_error(Q: np.ndarray, point: np.ndarray) -> float:
    h = np.append(np.asarray(point, dtype=np.float64), 1.0)
    return float(h @ Q @ h)


def collapse_cost(
    a: int,
    b: int,
    quadrics: np.ndarray,
    positions: np.ndarray,
) -> CollapseCandidate:
    """Optimal collapse target and cost for edge (a, b)."""
    Q = quadrics[a] + quadrics[b]
    A = Q[:3, :3]
    rhs = -Q[:3, 3]
    target = None
    if abs(np.linalg.det(A)) > _DET_EPS:
        target = np.linalg.solve(A, rhs)
    if target is None:
        candidates = [
            (positions[a] + positions[b]) / 2.0,
            positions[a],
            positions[b],
        ]
        target = min(candidates, key=lambda p: quadric_error(Q, p))
    cost = max(0.0, quadric_error(Q, target))
    return CollapseCandidate(edge=(min(a, b), max(a, b)), cost=cost, target=target)


class _DecimationMesh:
    """Mutable adjacency for greedy edge collapse."""

    def __init__(self, mesh: TriangleMesh):
        self.verts = mesh.vertices.copy()
        self.tris = mesh.triangles.astype(np.int64).copy()
        self.tri_alive = np.ones(len(self.tris), dtype=bool)
        self.vert_tris: List[Set[int]] = [set() for _ in range(len(self.verts))]
        for t, (a, b, c) in enumerate(self.tris):
            self.vert_tris[a].add(t)
            self.vert_tris[b].add(t)
            self.vert_tris[c].add(t)
        self.alive_count = len(self.tris)

    def neighbors(self, v: int) -> Set[int]:
        out: Set[int] = set()
        for t in self.vert_tris[v]:
            out.update(int(x) for x in self.tris[t])
        out.discard(v)
        return out

    def shared_tris(self, a: int, b: int) -> Set[int]:
        return self.vert_tris[a] & self.vert_tris[b]

    def tri_normal(self, tri_verts: np.ndarray) -> np.ndarray:
        n = np.cross(tri_verts[1] - tri_verts[0], tri_verts[2] - tri_verts[0])
        ln = np.linalg.norm(n)
        return n / ln if ln > 0 else n

    def collapse_ok(
        self, a: int, b: int, target: np.ndarray, config: DecimationConfig
    ) -> bool:
        shared = self.shared_tris(a, b)
        if config.preserve_topology:
            # link condition: common neighbors must be exactly the apex
            # vertices of the triangles on edge (a, b)
            common = self.neighbors(a) & self.neighbors(b)
            apexes = set()
            for t in shared:
                for v in self.tris[t]:
                    if v != a and v != b:
                        apexes.add(int(v))
            if common != apexes:
                return False
            if not shared:
                return False
        cos_limit = math.cos(math.radians(config.max_normal_flip_deg))
        ring = [t for t in (self.vert_tris[a] | self.vert_tris[b])
                if t not in shared]
        if not ring:
            return True
        ids = self.tris[ring]
        before = self.verts[ids]
        n0 = np.cross(before[:, 1] - before[:, 0], before[:, 2] - before[:, 0])
        l0 = np.linalg.norm(n0, axis=1)
        l0[l0 == 0] = 1.0
        n0 /= l0[:, None]
        after = before.copy()
        after[(ids == a) | (ids == b)] = target
        n1 = np.cross(after[:, 1] - after[:, 0], after[:, 2] - after[:, 0])
        l1 = np.linalg.norm(n1, axis=1)
        if (l1 <= 1e-12).any():
            return False  # collapse would create a degenerate triangle
        cos = np.einsum("ij,ij->i", n0, n1 / l1[:, None])
        return bool((cos >= cos_limit).all())

    def collapse(self, a: int, b: int, target: np.ndarray) -> int:
        """Collapse b into a at ``target``; returns triangles removed."""
        shared = self.shared_tris(a, b)
        self.verts[a] = target
        for t in shared:
            for v in self.tris[t]:
                self.vert_tris[int(v)].discard(t)
            self.tri_alive[t] = False
        self.alive_count -= len(shared)
        for t in list(self.vert_tris[b]):
            ids = self.tris[t]
            self.tris[t] = [a if int(v) == b else int(v) for v in ids]
            self.vert_tris[a].add(t)
        self.vert_tris[b] = set()
        return len(shared)

    def compact(self) -> TriangleMesh:
        tris = self.tris[self.tri_alive]
        if len(tris) == 0:
            return TriangleMesh.empty()
        used = np.unique(tris.ravel())
        remap = np.full(len(self.verts), -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        return TriangleMesh(self.verts[used], remap[tris].astype(np.int32))


def decimate(mesh: TriangleMesh, config: Optional[DecimationConfig] = None) -> DecimationResult:
    """Greedy min-cost edge collapse down to ceil(target_ratio * triangles).

    Deterministic: candidates are ordered by (cost, vertex id pair) and the
    heap uses lazy invalidation keyed on per-vertex stamp counters.
    """
    config = config or DecimationConfig()
    orig = mesh.triangle_count
    target = math.ceil(config.target_ratio * orig)
    if orig == 0 or config.target_ratio == 1.0:
        return DecimationResult(mesh, target_reached=True)

    dm = _DecimationMesh(mesh)
    quadrics = compute_vertex_quadrics(mesh)
    stamps = np.zeros(len(dm.verts), dtype=np.int64)

    heap: List[Tuple[float, int, int, int, int]] = []

    def push(a: int, b: int):
        if a > b:
            a, b = b, a
        cand = collapse_cost(a, b, quadrics, dm.verts)
        heapq.heappush(
            heap, (cand.cost, a, b, int(stamps[a]), int(stamps[b]))
        )

    seen = set()
    for t in range(len(dm.tris)):
        a, b, c = (int(v) for v in dm.tris[t])
        for u, v in ((a, b), (b, c), (c, a)):
            key = (u, v) if u < v else (v, u)
            if key not in seen:
                seen.add(key)
                push(*key)
    del seen

    collapses = 0
    while dm.alive_count > target and heap:
        cost, a, b, sa, sb = heapq.heappop(heap)
        if stamps[a] != sa or stamps[b] != sb:
            continue  # stale candidate
        if not dm.vert_tris[a] or not dm.vert_tris[b]:
            continue
        if not dm.shared_tris(a, b):
            continue  # edge no longer exists
        cand = collapse_cost(a, b, quadrics, dm.verts)
        if not dm.collapse_ok(a, b, cand.target, config):
            continue
        dm.collapse(a, b, cand.target)
        quadrics[a] = quadrics[a] + quadrics[b]
        stamps[a] += 1
        stamps[b] += 1
        collapses += 1
        for n in dm.neighbors(a):
            push(a, n)

    reached = dm.alive_count <= target
    if not reached:
        log.warning(
            "decimation target unreachable: %d alive vs target %d",
            dm.alive_count, target,
        )
    return DecimationResult(dm.compact(), target_reached=reached, collapses=collapses)


def build_lod_ladder(
    mesh: TriangleMesh,
    ratios: Sequence[float],
    distances: Sequence[float],
) -> LodLadder:
    """One decimated level per (ratio, min_distance) pair."""
    if len(ratios) != len(distances):
        raise ValueError("ratios and distances must have equal length")
    if not ratios or ratios[0] != 1.0 or distances[0] != 0:
        raise ValueError("ladder must start at ratio 1.0, distance 0")
    if any(b >= a for a, b in zip(ratios, ratios[1:])):
        raise ValueError("ratios must strictly decrease")
    levels = []
    for ratio, dist in zip(ratios, distances):
        if ratio == 1.0:
            levels.append((mesh, float(dist)))
        else:
            levels.append((decimate(mesh, DecimationConfig(target_ratio=ratio)).mesh,
                           float(dist)))
    return LodLadder(levels)


def select_lod(ladder: LodLadder, viewer_distance: float) -> int:
    """Highest level whose min_distance <= viewer_distance."""
    if viewer_distance < 0:
        raise ValueError("viewer_distance must be >= 0")
    idx = 0
    for k, (_, dist) in enumerate(ladder.levels):
        if dist <= viewer_distance:
            idx = k
    return idx


# ---------------------------------------------------------------------------
# exports

def mesh_to_stl_bytes(mesh: TriangleMesh, header: bytes = b"") -> bytes:
    """Binary little-endian STL; triangle soup (indexing is lost)."""
    count = mesh.triangle_count
    head = header[:80].ljust(80, b"\0")
    parts = [head, struct.pack("<I", count)]
    p = mesh.vertices[mesh.triangles] if count else np.zeros((0, 3, 3))
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]) if count else p[:, 0]
    if count:
        lens = np.linalg.norm(n, axis=1)
        lens[lens == 0] = 1.0
        n = n / lens[:, None]
    rec = np.zeros(count, dtype=np.dtype([
        ("normal", "<f4", 3), ("verts", "<f4", (3, 3)), ("attr", "<u2"),
    ]))
    if count:
        rec["normal"] = n.astype(np.float32)
        rec["verts"] = p.astype(np.float32)
    parts.append(rec.tobytes())
    return b"".join(parts)


def write_stl(mesh: TriangleMesh, path) -> str:
    path = Path(path)
    try:
        path.write_bytes(mesh_to_stl_bytes(mesh))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}", path=str(path)) from exc
    return str(path)


def mesh_to_obj(mesh: TriangleMesh) -> str:
    """ASCII OBJ with shared vertices, 1-based face indices."""
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
    for t in mesh.triangles:
        lines.append(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}")
    return "\n".join(lines) + "\n"


def write_obj(mesh: TriangleMesh, path) -> str:
    path = Path(path)
    try:
        path.write_text(mesh_to_obj(mesh))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}", path=str(path)) from exc
    return str(path)
