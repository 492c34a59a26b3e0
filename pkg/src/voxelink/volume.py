"""TIFF stack ingestion, slice access and mask import/export.

Volumes are stored as (nz, ny, nx) uint8 arrays so that ``ravel()`` yields
the x-fastest, slice-major layout. All physical sizes are millimeters.
"""

from __future__ import annotations

import os
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    DecodeError,
    DimensionMismatch,
    EmptyStack,
    IndexOutOfRange,
    InvalidWindow,
    IoError,
    UnsupportedPixelFormat,
)

AXES = ("axial", "coronal", "sagittal")

DEFAULT_SPACING = (0.3, 0.3, 0.5)
DEFAULT_WINDOW = (400.0, 1800.0)

# Pillow modes we accept per source bit depth
_MODES_8 = {"L"}
_MODES_16 = {"I;16", "I;16B", "I;16L"}


@dataclass
class VoxelVolume:
    """A loaded scan: 8-bit intensity grid plus physical metadata."""

    data: np.ndarray  # (nz, ny, nx) uint8
    spacing: Tuple[float, float, float]  # (sx, sy, sz) mm
    source_bit_depth: int = 8
    window: Tuple[float, float] = DEFAULT_WINDOW  # (center, width) in source units

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.uint8)
        if self.data.ndim != 3 or min(self.data.shape) < 1:
            raise ValueError("volume data must be a non-empty 3D array")
        if any(s <= 0 for s in self.spacing):
            raise ValueError("spacing components must be positive")

    @property
    def dims(self) -> Tuple[int, int, int]:
        nz, ny, nx = self.data.shape
        return (nx, ny, nz)

    @property
    def intensities(self) -> np.ndarray:
        """Flat x-fastest intensity array."""
        return self.data.ravel()


@dataclass
class MaskVolume:
    """Binary segmentation labels congruent with a parent volume."""

    data: np.ndarray  # (nz, ny, nx) uint8, values 0 or 255

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.uint8)
        if self.data.ndim != 3:
            raise ValueError("mask data must be 3D")
        bad = (self.data != 0) & (self.data != 255)
        if bad.any():
            raise ValueError("mask labels must be exactly 0 or 255")

    @property
    def dims(self) -> Tuple[int, int, int]:
        nz, ny, nx = self.data.shape
        return (nx, ny, nz)

    @classmethod
    def empty_like(cls, volume: VoxelVolume) -> "MaskVolume":
        return cls(np.zeros(volume.data.shape, dtype=np.uint8))

    def bind_check(self, volume: VoxelVolume) -> None:
        if self.dims != volume.dims:
            raise DimensionMismatch(
                f"mask dims {self.dims} do not match volume dims {volume.dims}"
            )


@dataclass
class SliceImage:
    axis: str
    index: int
    width: int
    height: int
    pixels: np.ndarray  # (height, width) uint8

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"unknown axis {self.axis!r}")
        if self.pixels.shape != (self.height, self.width):
            raise ValueError("pixel buffer does not match width/height")


def normalize_to_8bit(sample: float, window: Tuple[float, float]) -> int:
    """Window a raw 16-bit sample to [0, 255], round-half-up, clamped."""
    center, width = window
    if width <= 0:
        raise InvalidWindow(f"window width must be > 0, got {width}")
    lo = center - width / 2.0
    t = (float(sample) - lo) / float(width)
    t = min(max(t, 0.0), 1.0)
    return int(np.floor(t * 255.0 + 0.5))


def _window_array(samples: np.ndarray, window: Tuple[float, float]) -> np.ndarray:
    center, width = window
    if width <= 0:
        raise InvalidWindow(f"window width must be > 0, got {width}")
    lo = center - width / 2.0
    t = np.clip((samples.astype(np.float64) - lo) / float(width), 0.0, 1.0)
    return np.floor(t * 255.0 + 0.5).astype(np.uint8)


def _decode_slice(path) -> Tuple[np.ndarray, int]:
    """Decode one grayscale TIFF. Returns (array, bit_depth)."""
    try:
        img = Image.open(path)
        img.load()
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"cannot decode {path}: {exc}", path=str(path)) from exc
    mode = img.mode
    if mode in _MODES_8:
        return np.asarray(img, dtype=np.uint8), 8
    if mode in _MODES_16:
        return np.asarray(img, dtype=np.uint16), 16
    if mode == "I":
        bits = img.tag_v2.get(258) if hasattr(img, "tag_v2") else None
        if bits in (16, (16,)):
            return np.asarray(img).astype(np.uint16), 16
    raise UnsupportedPixelFormat(
        f"{path}: unsupported pixel format (mode {mode}); "
        "only 8- or 16-bit grayscale TIFF is accepted"
    )


def load_tiff_stack(
    paths: Sequence,
    spacing: Tuple[float, float, float] = DEFAULT_SPACING,
    window: Optional[Tuple[float, float]] = None,
) -> VoxelVolume:
    """Load an ordered list of grayscale TIFF slices into a VoxelVolume.

    16-bit sources are windowed to 8-bit; 8-bit sources pass through
    unchanged. Slice order is exactly the order of ``paths``.
    """
    if not paths:
        raise EmptyStack("no slice paths given")
    window = tuple(window) if window is not None else DEFAULT_WINDOW
    slices = []
    shape = None
    depth = None
    for i, path in enumerate(paths):
        arr, bits = _decode_slice(path)
        if shape is None:
            shape, depth = arr.shape, bits
        elif arr.shape != shape:
            raise DimensionMismatch(
                f"slice {i} ({path}) has size {arr.shape[::-1]}, "
                f"expected {shape[::-1]}",
                slice_index=i,
            )
        elif bits != depth:
            raise DimensionMismatch(
                f"slice {i} ({path}) is {bits}-bit, expected {depth}-bit",
                slice_index=i,
            )
        slices.append(arr)
    data = np.stack(slices)
    if depth == 16:
        data = _window_array(data, window)
    return VoxelVolume(
        data=data, spacing=tuple(spacing), source_bit_depth=depth, window=window
    )


def load_mask_stack(paths: Sequence, parent_dims: Tuple[int, int, int]) -> MaskVolume:
    """Load a mask stack; any nonzero source pixel becomes foreground (255)."""
    if not paths:
        raise EmptyStack("no mask paths given")
    vol = load_tiff_stack(paths, spacing=(1.0, 1.0, 1.0))
    mask = MaskVolume(np.where(vol.data != 0, 255, 0).astype(np.uint8))
    if mask.dims != tuple(parent_dims):
        raise DimensionMismatch(
            f"mask dims {mask.dims} do not match parent dims {tuple(parent_dims)}"
        )
    return mask


def export_mask_stack(mask: MaskVolume, directory, basename: str) -> list:
    """Write the mask as <basename>_NNNN.tif slices; returns paths in order."""
    directory = Path(directory)
    written = []
    for k in range(mask.data.shape[0]):
        path = directory / f"{basename}_{k:04d}.tif"
        try:
            Image.fromarray(mask.data[k], mode="L").save(
                path, format="TIFF", compression=None
            )
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}", path=str(path)) from exc
        written.append(str(path))
    return written


def get_slice(volume, axis: str, index: int) -> SliceImage:
    """Extract one slice plane. Works for VoxelVolume and MaskVolume data."""
    data = volume.data
    nz, ny, nx = data.shape
    extents = {"axial": nz, "coronal": ny, "sagittal": nx}
    if axis not in extents:
        raise IndexOutOfRange(f"unknown axis {axis!r}")
    if not 0 <= index < extents[axis]:
        raise IndexOutOfRange(
            f"{axis} index {index} out of range [0, {extents[axis]})"
        )
    if axis == "axial":
        plane = data[index]
    elif axis == "coronal":
        plane = data[:, index, :]
    else:
        plane = data[:, :, index]
    plane = np.ascontiguousarray(plane)
    h, w = plane.shape
    return SliceImage(axis=axis, index=index, width=w, height=h, pixels=plane)


class SliceCache:
    """LRU cache of decoded axial slices with window preloading.

    Eviction order is least-recently-used; ``preload_window`` touches slices
    outermost-first so the slices nearest the requested center survive when
    the window exceeds capacity.
    """

    def __init__(self, volume: VoxelVolume, capacity: int = 64):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.volume = volume
        self.capacity = capacity
        self.center = 0
        self._resident: OrderedDict[int, SliceImage] = OrderedDict()
        self.decode_count = 0  # total slice materializations, for tests

    @property
    def resident_indices(self):
        return set(self._resident)

    def get(self, index: int) -> SliceImage:
        if index in self._resident:
            self._resident.move_to_end(index)
            return self._resident[index]
        img = get_slice(self.volume, "axial", index)
        self.decode_count += 1
        self._resident[index] = img
        while len(self._resident) > self.capacity:
            self._resident.popitem(last=False)
        return img

    def preload_window(self, center: int, radius: int) -> None:
        if radius < 0:
            raise ValueError("radius must be >= 0")
        nz = self.volume.data.shape[0]
        lo = max(0, center - radius)
        hi = min(nz - 1, center + radius)
        self.center = center
        # touch far-to-near so LRU keeps the slices closest to center
        order = sorted(range(lo, hi + 1), key=lambda i: -abs(i - center))
        for idx in order:
            self.get(idx)


def preload_window(cache: SliceCache, center: int, radius: int) -> SliceCache:
    cache.preload_window(center, radius)
    return cache


def write_volume_meta(volume: VoxelVolume, path) -> str:
    """Write the key=value sidecar describing a volume export."""
    nx, ny, nz = volume.dims
    sx, sy, sz = volume.spacing
    c, w = volume.window
    lines = [
        f"dims={nx},{ny},{nz}",
        f"spacing_mm={sx},{sy},{sz}",
        f"window={c},{w}",
        f"source_bit_depth={volume.source_bit_depth}",
    ]
    path = Path(path)
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}", path=str(path)) from exc
    return str(path)


def list_stack_dir(directory) -> list:
    """Lexicographically sorted .tif/.tiff paths in a directory (CLI order)."""
    directory = Path(directory)
    paths = sorted(
        p for p in directory.iterdir() if p.suffix.lower() in (".tif", ".tiff")
    )
    return [str(p) for p in paths]
