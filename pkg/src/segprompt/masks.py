"""Binary/label masks and the geometric primitives built on them.

Coordinate convention, used everywhere in this package: ``x`` is the column
index and ``y`` the row index, with the origin at the top-left pixel.  Arrays
are indexed ``[y, x]``.  Bounding boxes use inclusive pixel bounds, so a
single-pixel box has ``x_min == x_max``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .errors import DimensionMismatchError, EmptyMaskError, UnknownLabelError

MAX_SIDE = 8192


class PixelPoint(NamedTuple):
    x: int
    y: int


@dataclass(frozen=True)
class BBox:
    """Inclusive pixel bounds; extent along an axis is max - min + 1."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"inverted bounds: {self}")
        if self.x_min < 0 or self.y_min < 0:
            raise ValueError(f"negative bounds: {self}")

    @property
    def extent_x(self) -> int:
        return self.x_max - self.x_min + 1

    @property
    def extent_y(self) -> int:
        return self.y_max - self.y_min + 1

    def contains(self, other: "BBox") -> bool:
        return (
            self.x_min <= other.x_min
            and self.y_min <= other.y_min
            and self.x_max >= other.x_max
            and self.y_max >= other.y_max
        )

    def contains_point(self, p: PixelPoint) -> bool:
        return self.x_min <= p.x <= self.x_max and self.y_min <= p.y <= self.y_max


def _as_grid(values, dtype, width: int | None, height: int | None) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim == 1:
        if width is None or height is None:
            raise ValueError("flat grids need explicit width and height")
        if arr.size != width * height:
            raise ValueError(f"grid length {arr.size} != {width}x{height}")
        arr = arr.reshape(height, width)
    elif arr.ndim != 2:
        raise ValueError(f"expected a 2-d grid, got shape {arr.shape}")
    h, w = arr.shape
    if not (1 <= w <= MAX_SIDE and 1 <= h <= MAX_SIDE):
        raise ValueError(f"dimensions {w}x{h} outside 1..{MAX_SIDE}")
    arr = np.ascontiguousarray(arr.astype(dtype, copy=True))
    arr.setflags(write=False)
    return arr


class BinaryMask:
    """Immutable per-pixel foreground/background grid.

    ``pixels`` is a read-only bool array of shape (height, width), row-major.
    """

    __slots__ = ("pixels", "_fg_count")

    def __init__(self, pixels, *, width: int | None = None, height: int | None = None):
        self.pixels: np.ndarray = _as_grid(pixels, bool, width, height)
        self._fg_count: int | None = None

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def foreground_count(self) -> int:
        if self._fg_count is None:
            self._fg_count = int(np.count_nonzero(self.pixels))
        return self._fg_count

    def background_count(self) -> int:
        return self.width * self.height - self.foreground_count()

    def __getitem__(self, p: PixelPoint | tuple) -> bool:
        x, y = p
        return bool(self.pixels[y, x])

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )

    def __hash__(self):
        return hash((self.pixels.shape, self.pixels.tobytes()))

    def __repr__(self):
        return f"BinaryMask({self.width}x{self.height}, fg={self.foreground_count()})"

    def foreground_points(self) -> list[PixelPoint]:
        """All foreground pixels in row-major order."""
        ys, xs = np.nonzero(self.pixels)
        return [PixelPoint(int(x), int(y)) for x, y in zip(xs, ys)]


class LabelMask:
    """Immutable small-integer label grid (one value per pixel)."""

    __slots__ = ("labels",)

    def __init__(self, labels, *, width: int | None = None, height: int | None = None):
        self.labels: np.ndarray = _as_grid(labels, np.int32, width, height)

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    def values(self) -> set[int]:
        return {int(v) for v in np.unique(self.labels)}


def binarize(labels: LabelMask, target_labels: Iterable[int], label_set: Iterable[int] | None = None) -> BinaryMask:
    """Foreground = pixels whose label is in ``target_labels``.

    ``label_set``, when given, is the dataset's declared label vocabulary;
    targets outside it raise :class:`UnknownLabelError`.
    """
    targets = {int(t) for t in target_labels}
    if not targets:
        raise UnknownLabelError("target label set is empty")
    if label_set is not None:
        known = {int(v) for v in label_set}
        unknown = targets - known
        if unknown:
            raise UnknownLabelError(f"labels {sorted(unknown)} not in declared set {sorted(known)}")
    out = np.isin(labels.labels, sorted(targets))
    return BinaryMask(out)


def tight_bbox(mask: BinaryMask) -> BBox:
    """Smallest box containing every foreground pixel; each side touches one."""
    if mask.foreground_count() == 0:
        raise EmptyMaskError("tight_bbox needs at least one foreground pixel")
    ys, xs = np.nonzero(mask.pixels)
    return BBox(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))


def centroid(mask: BinaryMask) -> PixelPoint:
    """Rounded mean of the foreground coordinates, snapped onto foreground.

    If the rounded arithmetic centroid lands on background, the nearest
    foreground pixel by Euclidean distance is returned instead; distance ties
    break in row-major order.  The result therefore always satisfies
    ``mask[result] == True``.
    """
    if mask.foreground_count() == 0:
        raise EmptyMaskError("centroid needs at least one foreground pixel")
    ys, xs = np.nonzero(mask.pixels)
    cx = int(round(float(xs.mean())))
    cy = int(round(float(ys.mean())))
    cx = min(max(cx, 0), mask.width - 1)
    cy = min(max(cy, 0), mask.height - 1)
    if mask.pixels[cy, cx]:
        return PixelPoint(cx, cy)
    d2 = (xs.astype(np.int64) - cx) ** 2 + (ys.astype(np.int64) - cy) ** 2
    order = ys.astype(np.int64) * mask.width + xs.astype(np.int64)
    best = int(np.lexsort((order, d2))[0])
    return PixelPoint(int(xs[best]), int(ys[best]))


def box_center(box: BBox) -> PixelPoint:
    """Floor midpoint of the box along each axis."""
    return PixelPoint((box.x_min + box.x_max) // 2, (box.y_min + box.y_max) // 2)


def quadrant_partition(mask: BinaryMask) -> list[BinaryMask]:
    """Split the mask's tight box into a 2x2 grid and clip foreground to it.

    The split happens at the floor midpoints of the tight bounding box, so
    odd extents give the top/left quadrants the extra row/column.  Returned
    views are full-size masks in order top-left, top-right, bottom-left,
    bottom-right; their foregrounds partition the input foreground exactly.
    Quadrants may be empty (degenerate boxes or lopsided masks).
    """
    box = tight_bbox(mask)
    mid_x = (box.x_min + box.x_max) // 2
    mid_y = (box.y_min + box.y_max) // 2
    spans = [
        (box.x_min, mid_x, box.y_min, mid_y),
        (mid_x + 1, box.x_max, box.y_min, mid_y),
        (box.x_min, mid_x, mid_y + 1, box.y_max),
        (mid_x + 1, box.x_max, mid_y + 1, box.y_max),
    ]
    views = []
    for x0, x1, y0, y1 in spans:
        clipped = np.zeros_like(mask.pixels)
        if x0 <= x1 and y0 <= y1:
            clipped[y0 : y1 + 1, x0 : x1 + 1] = mask.pixels[y0 : y1 + 1, x0 : x1 + 1]
        views.append(BinaryMask(clipped))
    return views


def require_same_shape(a: BinaryMask, b: BinaryMask) -> None:
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionMismatchError(
            f"mask dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
