"""Axis-aligned bounding-box algebra.

Boxes use the COCO convention ``(x_min, y_min, width, height)`` in
continuous pixel units with a top-left origin and y growing downward.

Coordinates are snapped to a dyadic grid of ``1 / COORD_QUANTUM`` pixels on
construction. Every flip, rotation by a multiple of 90 degrees and
integer-offset crop is then exact in floating point, which makes those
transforms exact involutions on any box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

from .errors import ParameterError

COORD_QUANTUM = 1024
CROP_RETENTION = 0.25


def quantize(value: float) -> float:
    """Snap a coordinate to the nearest multiple of ``1 / COORD_QUANTUM``."""
    return math.floor(value * COORD_QUANTUM + 0.5) / COORD_QUANTUM


@dataclass(frozen=True)
class ImageExtent:
    width: int
    height: int

    def __post_init__(self):
        if int(self.width) != self.width or int(self.height) != self.height:
            raise ParameterError(f"extent must be integral, got {self.width}x{self.height}")
        if self.width < 1 or self.height < 1:
            raise ParameterError(f"extent must be at least 1x1, got {self.width}x{self.height}")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @property
    def area(self) -> int:
        return self.width * self.height


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box ``(x_min, y_min, width, height)``."""

    x_min: float
    y_min: float
    width: float
    height: float

    def __post_init__(self):
        x0 = quantize(float(self.x_min))
        y0 = quantize(float(self.y_min))
        # Snap the far corner as well so that corner-based transforms stay exact.
        x1 = quantize(float(self.x_min) + float(self.width))
        y1 = quantize(float(self.y_min) + float(self.height))
        if not (x1 > x0 and y1 > y0):
            raise ParameterError(
                f"box must have positive width and height, got "
                f"({self.x_min}, {self.y_min}, {self.width}, {self.height})"
            )
        object.__setattr__(self, "x_min", x0)
        object.__setattr__(self, "y_min", y0)
        object.__setattr__(self, "width", x1 - x0)
        object.__setattr__(self, "height", y1 - y0)

    @classmethod
    def from_corners(cls, x_min: float, y_min: float, x_max: float, y_max: float) -> "BoundingBox":
        return cls(x_min, y_min, x_max - x_min, y_max - y_min)

    @property
    def x_max(self) -> float:
        return self.x_min + self.width

    @property
    def y_max(self) -> float:
        return self.y_min + self.height

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_xywh(self) -> list:
        return [self.x_min, self.y_min, self.width, self.height]

    def within(self, extent: ImageExtent) -> bool:
        return (
            self.x_min >= 0
            and self.y_min >= 0
            and self.x_max <= extent.width
            and self.y_max <= extent.height
        )


def intersection_area(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def intersect(a: BoundingBox, b: BoundingBox) -> Optional[BoundingBox]:
    """Return the overlapping box, or None when the boxes do not overlap."""
    x0, y0 = max(a.x_min, b.x_min), max(a.y_min, b.y_min)
    x1, y1 = min(a.x_max, b.x_max), min(a.y_max, b.y_max)
    if x1 <= x0 or y1 <= y0:
        return None
    return BoundingBox.from_corners(x0, y0, x1, y1)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes, 0.0 when they are disjoint."""
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    union = a.area + b.area - inter
    return min(1.0, inter / union)


def is_isolated(box: BoundingBox, others: Sequence[BoundingBox], threshold: float) -> bool:
    """True iff every IoU between ``box`` and ``others`` is below ``threshold``.

    ``others`` must not contain ``box`` itself unless self-overlap is meant
    to disqualify it.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ParameterError(f"threshold must lie in [0, 1], got {threshold}")
    return all(iou(box, other) < threshold for other in others)


def clip_box(box: BoundingBox, extent: ImageExtent) -> Optional[BoundingBox]:
    """Clip to ``[0, W] x [0, H]``; None if nothing of the box remains."""
    return intersect(box, BoundingBox(0, 0, extent.width, extent.height))


# Transforms are small value objects so callers can describe a geometric
# operation once and apply it to every annotation of an image.


@dataclass(frozen=True)
class HFlip:
    extent: ImageExtent


@dataclass(frozen=True)
class VFlip:
    extent: ImageExtent


@dataclass(frozen=True)
class Crop:
    """Crop window in integer pixel coordinates of the source extent."""

    extent: ImageExtent
    x: int
    y: int
    width: int
    height: int
    retention: float = CROP_RETENTION

    def __post_init__(self):
        if (
            self.width < 1
            or self.height < 1
            or self.x < 0
            or self.y < 0
            or self.x + self.width > self.extent.width
            or self.y + self.height > self.extent.height
        ):
            raise ParameterError(
                f"crop window ({self.x}, {self.y}, {self.width}, {self.height}) "
                f"outside extent {self.extent.width}x{self.extent.height}"
            )

    @property
    def window(self) -> BoundingBox:
        return BoundingBox(self.x, self.y, self.width, self.height)

    @property
    def out_extent(self) -> ImageExtent:
        return ImageExtent(self.width, self.height)


@dataclass(frozen=True)
class Rotate90:
    """``k`` clockwise quarter turns of an image with the given extent."""

    extent: ImageExtent
    k: int

    def __post_init__(self):
        if self.k not in (1, 2, 3):
            raise ParameterError(f"k must be 1, 2 or 3, got {self.k}")

    @property
    def out_extent(self) -> ImageExtent:
        if self.k == 2:
            return self.extent
        return ImageExtent(self.extent.height, self.extent.width)


@dataclass(frozen=True)
class Scale:
    sx: float
    sy: float

    def __post_init__(self):
        if not (self.sx > 0 and self.sy > 0):
            raise ParameterError(f"scale factors must be positive, got {self.sx}, {self.sy}")


@dataclass(frozen=True)
class RotateAngle:
    """Clockwise rotation by an arbitrary angle about the image centre.

    The output canvas keeps the input extent. Boxes map to the axis-aligned
    hull of their rotated corners and are clipped to the canvas, so they
    loosen for angles that are not multiples of 90 degrees.
    """

    extent: ImageExtent
    degrees: float


Transform = Union[HFlip, VFlip, Crop, Rotate90, Scale, RotateAngle]


def transform_box(box: BoundingBox, transform: Transform) -> Optional[BoundingBox]:
    """Map a box through a geometric transform.

    Returns None ("dropped") when a crop keeps less than its retention
    fraction of the box area, or a rotated hull leaves the canvas.
    """
    if isinstance(transform, HFlip):
        w = transform.extent.width
        return BoundingBox.from_corners(w - box.x_max, box.y_min, w - box.x_min, box.y_max)
    if isinstance(transform, VFlip):
        h = transform.extent.height
        return BoundingBox.from_corners(box.x_min, h - box.y_max, box.x_max, h - box.y_min)
    if isinstance(transform, Crop):
        visible = intersect(box, transform.window)
        if visible is None or visible.area < transform.retention * box.area:
            return None
        return BoundingBox.from_corners(
            visible.x_min - transform.x,
            visible.y_min - transform.y,
            visible.x_max - transform.x,
            visible.y_max - transform.y,
        )
    if isinstance(transform, Rotate90):
        w, h = transform.extent.width, transform.extent.height
        if transform.k == 1:
            return BoundingBox.from_corners(h - box.y_max, box.x_min, h - box.y_min, box.x_max)
        if transform.k == 2:
            return BoundingBox.from_corners(w - box.x_max, h - box.y_max, w - box.x_min, h - box.y_min)
        return BoundingBox.from_corners(box.y_min, w - box.x_max, box.y_max, w - box.x_min)
    if isinstance(transform, Scale):
        return BoundingBox.from_corners(
            box.x_min * transform.sx,
            box.y_min * transform.sy,
            box.x_max * transform.sx,
            box.y_max * transform.sy,
        )
    if isinstance(transform, RotateAngle):
        ext = transform.extent
        cx, cy = ext.width / 2.0, ext.height / 2.0
        theta = math.radians(transform.degrees)
        cos_t, sin_t = math.cos(theta), math.sin(theta)
        xs, ys = [], []
        for px, py in (
            (box.x_min, box.y_min),
            (box.x_max, box.y_min),
            (box.x_min, box.y_max),
            (box.x_max, box.y_max),
        ):
            dx, dy = px - cx, py - cy
            # Clockwise on screen with y pointing down.
            xs.append(cx + dx * cos_t - dy * sin_t)
            ys.append(cy + dx * sin_t + dy * cos_t)
        x0, y0, x1, y1 = quantize(min(xs)), quantize(min(ys)), quantize(max(xs)), quantize(max(ys))
        if x1 <= x0 or y1 <= y0:
            return None
        return clip_box(BoundingBox.from_corners(x0, y0, x1, y1), ext)
    raise ParameterError(f"unknown transform {transform!r}")


def pixel_region(box: BoundingBox, extent: ImageExtent) -> tuple:
    """Integer pixel span ``(col0, row0, col1, row1)`` covered by a box.

    Covers every pixel the box touches, clipped to the extent, and is never
    empty for a box that overlaps the image.
    """
    c0 = min(max(int(math.floor(box.x_min)), 0), extent.width - 1)
    r0 = min(max(int(math.floor(box.y_min)), 0), extent.height - 1)
    c1 = min(max(int(math.ceil(box.x_max)), c0 + 1), extent.width)
    r1 = min(max(int(math.ceil(box.y_max)), r0 + 1), extent.height)
    return c0, r0, c1, r1
