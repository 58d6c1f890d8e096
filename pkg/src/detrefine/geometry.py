"""Geometric primitives and detection records shared by every pipeline stage.

Boxes are continuous, corner-form (min/max), image origin top-left, x
rightward, y downward. File formats use [x, y, w, h] and are converted at
the I/O boundary. There is no "+1" inclusive-pixel convention anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class EmptyCropError(ValueError):
    """Raised when a box has no overlap with the image it is clipped to."""


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box. Zero-area boxes are legal; negative extents are not."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"non-finite box coordinates {coords}")
        if self.x_max < self.x_min or self.y_max < self.y_min:
            raise ValueError(f"negative box extent {coords}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def area(self) -> float:
        return self.width * self.height

    def as_xywh(self) -> list[float]:
        return [self.x_min, self.y_min, self.width, self.height]

    @classmethod
    def from_xywh(cls, xywh) -> BoundingBox:
        x, y, w, h = (float(v) for v in xywh)
        return cls(x, y, x + w, y + h)


def area(b: BoundingBox) -> float:
    """Box area, zero for degenerate boxes."""
    return b.area()


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes.

    Total on valid boxes: returns 0.0 whenever the union has zero area, so
    zero-area boxes never match anything.
    """
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = a.area() + b.area() - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def clamp_to_image(b: BoundingBox, width: int, height: int) -> BoundingBox:
    """Clip a box to the [0, width] x [0, height] image extent.

    Raises EmptyCropError when the box lies entirely outside the image;
    idempotent otherwise.
    """
    if width < 1 or height < 1:
        raise ValueError(f"image extent must be positive, got {width}x{height}")
    if b.x_min >= width or b.y_min >= height or b.x_max <= 0 or b.y_max <= 0:
        raise EmptyCropError(
            f"empty crop: box ({b.x_min}, {b.y_min}, {b.x_max}, {b.y_max}) "
            f"is outside a {width}x{height} image"
        )
    return BoundingBox(
        max(0.0, b.x_min),
        max(0.0, b.y_min),
        min(float(width), b.x_max),
        min(float(height), b.y_max),
    )


@dataclass(frozen=True)
class Detection:
    """One base-detector output: a scored, class-labeled box on an image."""

    image_id: str
    class_id: int
    score: float
    bbox: BoundingBox

    def __post_init__(self) -> None:
        if self.class_id < 1:
            raise ValueError(f"class_id must be >= 1 (0 is background), got {self.class_id}")
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must lie in [0, 1], got {self.score}")


@dataclass(frozen=True)
class GroundTruthObject:
    """One annotated object; difficult objects are excluded from scoring."""

    image_id: str
    class_id: int
    bbox: BoundingBox
    difficult: bool = False

    def __post_init__(self) -> None:
        if self.class_id < 1:
            raise ValueError(f"class_id must be >= 1, got {self.class_id}")


@dataclass(frozen=True, eq=False)
class Image:
    """8-bit RGB raster, pixels shaped (height, width, 3) row-major.

    Compared by identity: the pixel grid makes field equality ill-defined.
    """

    id: str
    width: int
    height: int
    pixels: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image extent must be positive, got {self.width}x{self.height}")
        if self.pixels.shape != (self.height, self.width, 3):
            raise ValueError(
                f"pixel grid shape {self.pixels.shape} does not match "
                f"{self.height}x{self.width}x3"
            )
        if self.pixels.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {self.pixels.dtype}")
