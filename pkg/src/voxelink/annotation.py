"""Stylus-ray brush editing of mask slices.

Projection maps 6-DoF ray samples onto a physical canvas plane bound to a
mask slice; stamping rasterizes disc/capsule coverage using the pixel-center
convention (pixel (i, j) has center (i + 0.5, j + 0.5) in pixel space).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateRay, IndexOutOfRange, ShapeMismatch
from .volume import MaskVolume, SliceImage, get_slice

ADDITIVE = "additive"
SUBTRACTIVE = "subtractive"

# slack absorbing float error so e.g. a perpendicular ray through an exact
# pixel center stamps that pixel at radius 0 under any rigid canvas pose
_RADIUS_SLACK = 1e-9

_ORTHO_TOL = 1e-9


@dataclass
class CanvasPlane:
    """Physical rectangle in world space showing one mask slice."""

    origin: np.ndarray  # mm, top-left pixel corner
    u_axis: np.ndarray  # unit vector along pixel x
    v_axis: np.ndarray  # unit vector along pixel y
    width_mm: float
    height_mm: float
    axis: str  # bound slice axis
    index: int  # bound slice index
    pixel_dims: Tuple[int, int]  # (pw, ph)

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64)
        self.u_axis = np.asarray(self.u_axis, dtype=np.float64)
        self.v_axis = np.asarray(self.v_axis, dtype=np.float64)
        for name, v in (("u_axis", self.u_axis), ("v_axis", self.v_axis)):
            if abs(np.linalg.norm(v) - 1.0) > _ORTHO_TOL:
                raise ValueError(f"{name} must be unit length")
        if abs(float(np.dot(self.u_axis, self.v_axis))) > _ORTHO_TOL:
            raise ValueError("u_axis and v_axis must be orthogonal")
        if self.width_mm <= 0 or self.height_mm <= 0:
            raise ValueError("canvas extents must be positive")

    @property
    def normal(self) -> np.ndarray:
        return np.cross(self.u_axis, self.v_axis)


@dataclass
class StylusSample:
    tip: np.ndarray  # mm
    direction: np.ndarray  # unit ray direction
    t_ms: float = 0.0
    pressed: bool = True

    def __post_init__(self):
        self.tip = np.asarray(self.tip, dtype=np.float64)
        self.direction = np.asarray(self.direction, dtype=np.float64)
        if abs(np.linalg.norm(self.direction) - 1.0) > _ORTHO_TOL:
            raise ValueError("sample direction must be unit length")


@dataclass
class Stroke:
    mode: str  # ADDITIVE or SUBTRACTIVE
    radius_px: float
    samples: List[StylusSample]
    stroke_id: str = ""

    def __post_init__(self):
        if self.mode not in (ADDITIVE, SUBTRACTIVE):
            raise ValueError(f"unknown stroke mode {self.mode!r}")
        if self.radius_px < 0:
            raise ValueError("radius must be >= 0")
        ts = [s.t_ms for s in self.samples]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ValueError("sample timestamps must be non-decreasing")


@dataclass
class EditRecord:
    """Per-pixel before/after of one stroke on one slice."""

    slice: Tuple[str, int]
    changed: List[Tuple[Tuple[int, int], int, int]]  # ((x, y), old, new)
    stroke_id: str = ""

    def __len__(self):
        return len(self.changed)


def project_sample(canvas: CanvasPlane, sample: StylusSample) -> Optional[Tuple[float, float]]:
    """Intersect a stylus ray with the canvas; return pixel coords or None.

    Hits behind the tip, outside the rectangle, or against the back side of
    the canvas are misses. Raises DegenerateRay when the ray is parallel to
    the plane (within 1e-9) so callers can report it distinctly.
    """
    n = canvas.normal
    denom = float(np.dot(sample.direction, n))
    if abs(denom) < 1e-9:
        raise DegenerateRay("ray direction is parallel to the canvas plane")
    if denom > 0:
        return None  # back-side approach: pen must face the image
    t = float(np.dot(canvas.origin - sample.tip, n)) / denom
    if t < 0:
        return None
    hit = sample.tip + t * sample.direction
    rel = hit - canvas.origin
    hu = float(np.dot(rel, canvas.u_axis))
    hv = float(np.dot(rel, canvas.v_axis))
    if not (0.0 <= hu <= canvas.width_mm and 0.0 <= hv <= canvas.height_mm):
        return None
    pw, ph = canvas.pixel_dims
    return ((hu / canvas.width_mm) * pw, (hv / canvas.height_mm) * ph)


def interpolate_points(
    p0: Tuple[float, float], p1: Tuple[float, float], max_gap_px: float
) -> List[Tuple[float, float]]:
    """Uniform points on segment p0->p1 with consecutive gaps <= max_gap_px."""
    if max_gap_px <= 0:
        raise ValueError("max_gap_px must be > 0")
    x0, y0 = p0
    x1, y1 = p1
    dist = math.hypot(x1 - x0, y1 - y0)
    if dist == 0.0:
        return [p0]
    n = math.ceil(dist / max_gap_px)
    pts = [
        (x0 + (x1 - x0) * (i / n), y0 + (y1 - y0) * (i / n)) for i in range(n)
    ]
    pts.append(p1)  # endpoint exact
    return pts


def _covered_pixels_disc(
    center: Tuple[float, float], radius: float, width: int, height: int
) -> List[Tuple[int, int]]:
    cx, cy = center
    r = radius + _RADIUS_SLACK
    x_lo = max(0, math.floor(cx - 0.5 - r))
    x_hi = min(width - 1, math.ceil(cx - 0.5 + r))
    y_lo = max(0, math.floor(cy - 0.5 - r))
    y_hi = min(height - 1, math.ceil(cy - 0.5 + r))
    out = []
    r2 = r * r
    for y in range(y_lo, y_hi + 1):
        dy = (y + 0.5) - cy
        for x in range(x_lo, x_hi + 1):
            dx = (x + 0.5) - cx
            if dx * dx + dy * dy <= r2:
                out.append((x, y))
    return out


def _covered_pixels_segment(
    p0: Tuple[float, float],
    p1: Tuple[float, float],
    radius: float,
    width: int,
    height: int,
) -> List[Tuple[int, int]]:
    """Pixels whose center is within radius of segment p0->p1 (capsule)."""
    x0, y0 = p0
    x1, y1 = p1
    dx, dy = x1 - x0, y1 - y0
    len2 = dx * dx + dy * dy
    if len2 == 0.0:
        return _covered_pixels_disc(p0, radius, width, height)
    r = radius + _RADIUS_SLACK
    x_lo = max(0, math.floor(min(x0, x1) - 0.5 - r))
    x_hi = min(width - 1, math.ceil(max(x0, x1) - 0.5 + r))
    y_lo = max(0, math.floor(min(y0, y1) - 0.5 - r))
    y_hi = min(height - 1, math.ceil(max(y0, y1) - 0.5 + r))
    out = []
    r2 = r * r
    for y in range(y_lo, y_hi + 1):
        cy = y + 0.5
        for x in range(x_lo, x_hi + 1):
            cx = x + 0.5
            t = ((cx - x0) * dx + (cy - y0) * dy) / len2
            t = min(max(t, 0.0), 1.0)
            qx = x0 + t * dx - cx
            qy = y0 + t * dy - cy
            if qx * qx + qy * qy <= r2:
                out.append((x, y))
    return out


def _slice_view(mask: MaskVolume, axis: str, index: int) -> np.ndarray:
    """Writable (height, width) view of a mask slice."""
    nz, ny, nx = mask.data.shape
    extents = {"axial": nz, "coronal": ny, "sagittal": nx}
    if axis not in extents or not 0 <= index < extents[axis]:
        raise IndexOutOfRange(f"invalid slice ({axis}, {index}) for mask {mask.dims}")
    if axis == "axial":
        return mask.data[index]
    if axis == "coronal":
        return mask.data[:, index, :]
    return mask.data[:, :, index]


def _apply_pixels(
    plane: np.ndarray, pixels, mode: str, merged: dict
) -> None:
    target = 255 if mode == ADDITIVE else 0
    for (x, y) in pixels:
        old = int(plane[y, x])
        if old == target:
            continue
        plane[y, x] = target
        if (x, y) not in merged:
            merged[(x, y)] = [old, target]
        else:
            merged[(x, y)][1] = target


def stamp_brush(
    mask: MaskVolume,
    slice_key: Tuple[str, int],
    center: Tuple[float, float],
    radius_px: float,
    mode: str,
    stroke_id: str = "",
) -> EditRecord:
    """Set every pixel whose center lies within radius_px of ``center``."""
    axis, index = slice_key
    plane = _slice_view(mask, axis, index)
    h, w = plane.shape
    merged: dict = {}
    _apply_pixels(plane, _covered_pixels_disc(center, radius_px, w, h), mode, merged)
    changed = [((x, y), old, new) for (x, y), (old, new) in sorted(merged.items())]
    return EditRecord(slice=(axis, index), changed=changed, stroke_id=stroke_id)


def apply_stroke(mask: MaskVolume, canvas: CanvasPlane, stroke: Stroke) -> EditRecord:
    """Project, interpolate and stamp a full stroke on the bound slice.

    Coverage per run of consecutive on-canvas samples is the exact capsule
    set {p : dist(p.center, polyline) <= radius}; samples that miss the
    canvas split the stroke into disjoint runs.
    """
    axis, index = canvas.axis, canvas.index
    plane = _slice_view(mask, axis, index)
    h, w = plane.shape
    merged: dict = {}

    runs: List[List[Tuple[float, float]]] = [[]]
    for sample in stroke.samples:
        if not sample.pressed:
            runs.append([])
            continue
        try:
            hit = project_sample(canvas, sample)
        except DegenerateRay:
            hit = None
        if hit is None:
            runs.append([])
        else:
            runs[-1].append(hit)

    for run in runs:
        if not run:
            continue
        if len(run) == 1:
            _apply_pixels(
                plane,
                _covered_pixels_disc(run[0], stroke.radius_px, w, h),
                stroke.mode,
                merged,
            )
            continue
        for p0, p1 in zip(run, run[1:]):
            _apply_pixels(
                plane,
                _covered_pixels_segment(p0, p1, stroke.radius_px, w, h),
                stroke.mode,
                merged,
            )
    changed = [((x, y), old, new) for (x, y), (old, new) in sorted(merged.items())]
    return EditRecord(slice=(axis, index), changed=changed, stroke_id=stroke.stroke_id)


class EditJournal:
    """Undoable history of stroke edits, bounded depth, LIFO undo."""

    def __init__(self, depth: int = 64):
        if depth < 1:
            raise ValueError("depth must be >= 1")
        self.depth = depth
        self._records: List[EditRecord] = []
        self._applied = 0  # records [0, _applied) are live, rest are undone

    def record(self, record: EditRecord) -> None:
        del self._records[self._applied :]  # a new edit clears the redo tail
        self._records.append(record)
        self._applied = len(self._records)
        if len(self._records) > self.depth:
            drop = len(self._records) - self.depth
            del self._records[:drop]
            self._applied -= drop

    def undo(self, mask: MaskVolume) -> Optional[EditRecord]:
        if self._applied == 0:
            return None
        self._applied -= 1
        rec = self._records[self._applied]
        plane = _slice_view(mask, *rec.slice)
        for (x, y), old, _new in rec.changed:
            plane[y, x] = old
        return rec

    def redo(self, mask: MaskVolume) -> Optional[EditRecord]:
        if self._applied == len(self._records):
            return None
        rec = self._records[self._applied]
        self._applied += 1
        plane = _slice_view(mask, *rec.slice)
        for (x, y), _old, new in rec.changed:
            plane[y, x] = new
        return rec

    @property
    def undo_depth(self) -> int:
        return self._applied

    @property
    def redo_depth(self) -> int:
        return len(self._records) - self._applied


def undo(mask: MaskVolume, journal: EditJournal) -> Optional[EditRecord]:
    return journal.undo(mask)


def redo(mask: MaskVolume, journal: EditJournal) -> Optional[EditRecord]:
    return journal.redo(mask)


def composite_overlay(
    slice_img: SliceImage,
    mask_pixels: np.ndarray,
    color: Tuple[int, int, int],
    alpha: float,
) -> np.ndarray:
    """Alpha-blend mask foreground onto the grayscale slice; returns RGBA."""
    gray = slice_img.pixels
    if mask_pixels.shape != gray.shape:
        raise ShapeMismatch(
            f"mask slice {mask_pixels.shape} vs image {gray.shape}"
        )
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    out = np.empty(gray.shape + (4,), dtype=np.uint8)
    out[..., 0] = gray
    out[..., 1] = gray
    out[..., 2] = gray
    out[..., 3] = 255
    fg = mask_pixels != 0
    if fg.any():
        g = gray[fg].astype(np.float64)
        for c in range(3):
            blended = (1.0 - alpha) * g + alpha * float(color[c])
            out[..., c][fg] = np.floor(blended + 0.5).astype(np.uint8)
    return out
