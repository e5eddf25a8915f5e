"""Bounding boxes and binary morphology on voxel grids.

Boxes are zero-based, min inclusive, max exclusive. Morphology treats
out-of-grid voxels as background for erosion and clips at the boundary for
dilation; radius r means r iterations of the unit structuring element.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMask
from .volume_io import BinaryMask

SE_KINDS = ("cross6", "cross4-in-plane", "cube26")

# Unit-element neighbor offsets (origin is always probed implicitly).
_OFFSETS = {
    "cross4-in-plane": [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0)],
    "cross6": [
        (-1, 0, 0), (1, 0, 0),
        (0, -1, 0), (0, 1, 0),
        (0, 0, -1), (0, 0, 1),
    ],
    "cube26": [
        (dx, dy, dz)
        for dx in (-1, 0, 1)
        for dy in (-1, 0, 1)
        for dz in (-1, 0, 1)
        if (dx, dy, dz) != (0, 0, 0)
    ],
}


@dataclass(frozen=True)
class BBox3:
    """Axis-aligned voxel box: min inclusive, max exclusive."""

    min: tuple
    max: tuple

    def __post_init__(self):
        lo = tuple(int(v) for v in self.min)
        hi = tuple(int(v) for v in self.max)
        if len(lo) != 3 or len(hi) != 3:
            raise ValueError("BBox3 needs 3 components per corner")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError(f"empty box: min {lo}, max {hi}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    def size(self):
        return tuple(b - a for a, b in zip(self.min, self.max))

    def as_slices(self):
        return tuple(slice(a, b) for a, b in zip(self.min, self.max))

    def to_list(self):
        return [*self.min, *self.max]

    @classmethod
    def from_list(cls, values):
        values = list(values)
        if len(values) != 6:
            raise ValueError(f"expected [x0,y0,z0,x1,y1,z1], got {values}")
        return cls(tuple(values[:3]), tuple(values[3:]))

    def within(self, dims) -> bool:
        return all(0 <= a and b <= d for a, b, d in zip(self.min, self.max, dims))


@dataclass(frozen=True)
class StructuringElement:
    kind: str = "cross4-in-plane"
    radius: int = 1

    def __post_init__(self):
        if self.kind not in SE_KINDS:
            raise ValueError(f"unknown structuring element kind {self.kind!r}")
        if int(self.radius) < 1:
            raise ValueError(f"radius must be >= 1, got {self.radius}")
        object.__setattr__(self, "radius", int(self.radius))


def mask_bbox(mask: BinaryMask) -> BBox3:
    """Tight axis-aligned box around the foreground of a mask."""
    idx = np.nonzero(mask.data)
    if idx[0].size == 0:
        raise EmptyMask("cannot take bounding box of an empty mask")
    lo = tuple(int(ax.min()) for ax in idx)
    hi = tuple(int(ax.max()) + 1 for ax in idx)
    return BBox3(lo, hi)


def expand_bbox(box: BBox3, deltas, bounds) -> BBox3:
    """Move each face outward by its delta (negative contracts), clip to grid.

    deltas is (dx0, dx1, dy0, dy1, dz0, dz1), positive = outward. An axis
    contracted to nothing is clamped to length 1 at the midpoint (rounded
    down) of the input box, so the function is total.
    """
    deltas = [int(d) for d in deltas]
    if len(deltas) != 6:
        raise ValueError("expected 6 per-face deltas")
    lo = list(box.min)
    hi = list(box.max)
    out_lo, out_hi = [], []
    for axis in range(3):
        a = lo[axis] - deltas[2 * axis]
        b = hi[axis] + deltas[2 * axis + 1]
        a = min(max(a, 0), bounds[axis])
        b = min(max(b, 0), bounds[axis])
        if a >= b:
            mid = (lo[axis] + hi[axis]) // 2
            a, b = mid, mid + 1
        out_lo.append(a)
        out_hi.append(b)
    return BBox3(tuple(out_lo), tuple(out_hi))


def _shift(arr: np.ndarray, offset, fill):
    """Shift arr by offset voxels, filling exposed cells with `fill`."""
    out = np.full_like(arr, fill)
    src = []
    dst = []
    for ax, o in enumerate(offset):
        n = arr.shape[ax]
        if abs(o) >= n:
            return out
        if o >= 0:
            src.append(slice(0, n - o))
            dst.append(slice(o, n))
        else:
            src.append(slice(-o, n))
            dst.append(slice(0, n + o))
    out[tuple(dst)] = arr[tuple(src)]
    return out


def _erode_once(fg: np.ndarray, kind: str) -> np.ndarray:
    out = fg.copy()
    for off in _OFFSETS[kind]:
        out &= _shift(fg, off, False)
    return out


def _dilate_once(fg: np.ndarray, kind: str) -> np.ndarray:
    out = fg.copy()
    for off in _OFFSETS[kind]:
        out |= _shift(fg, off, False)
    return out


def erode(mask: BinaryMask, se: StructuringElement) -> BinaryMask:
    """Keep a voxel iff all element probes land on foreground (OOB = background)."""
    fg = mask.data.astype(bool)
    for _ in range(se.radius):
        fg = _erode_once(fg, se.kind)
    return BinaryMask(fg.astype(np.uint8), mask.spacing, mask.origin)


def dilate(mask: BinaryMask, se: StructuringElement) -> BinaryMask:
    """Set a voxel iff any element probe hits foreground; clipped at the grid."""
    fg = mask.data.astype(bool)
    for _ in range(se.radius):
        fg = _dilate_once(fg, se.kind)
    return BinaryMask(fg.astype(np.uint8), mask.spacing, mask.origin)


def count_components(mask: BinaryMask, kind: str = "cross6") -> int:
    """Number of connected foreground components (6-connected by default)."""
    fg = mask.data.astype(bool)
    remaining = fg.copy()
    n = 0
    while remaining.any():
        n += 1
        seed = np.zeros_like(fg)
        first = np.unravel_index(int(np.argmax(remaining)), fg.shape)
        seed[first] = True
        while True:
            grown = _dilate_once(seed, kind) & remaining
            grown |= seed
            if np.array_equal(grown, seed):
                break
            seed = grown
        remaining &= ~seed
    return n
