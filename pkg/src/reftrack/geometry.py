"""Axis-aligned boxes, IoU, and coordinate-space transforms.

Everything downstream (association gates, detection rewards, HOTA) is built
on these four operations, so they are kept total: zero-area boxes are legal
inputs and score IoU 0 instead of raising — rejecting degenerate model
output is the parser's job, not geometry's.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class BBox:
    """Corner-format box (x1, y1, x2, y2) in pixels; x2 >= x1 and y2 >= y1."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x2 >= self.x1 and self.y2 >= self.y1):
            raise ValueError(f"inverted box corners: ({self.x1}, {self.y1}, {self.x2}, {self.y2})")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    def to_xywh(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.width, self.height)

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> "BBox":
        return cls(x, y, x + w, y + h)


@dataclass(frozen=True)
class ImageDims:
    """Positive pixel extent of one image / coordinate space."""

    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"non-positive image dims: {self.width}x{self.height}")


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union in [0, 1]; 0 when the union has zero area."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def iou_matrix(rows: Sequence[BBox], cols: Sequence[BBox]) -> np.ndarray:
    """|rows| x |cols| matrix with entry (i, j) = iou(rows[i], cols[j])."""
    m = np.zeros((len(rows), len(cols)), dtype=np.float64)
    if not len(rows) or not len(cols):
        return m
    r = np.asarray([b.as_tuple() for b in rows], dtype=np.float64)
    c = np.asarray([b.as_tuple() for b in cols], dtype=np.float64)
    ix = np.minimum(r[:, None, 2], c[None, :, 2]) - np.maximum(r[:, None, 0], c[None, :, 0])
    iy = np.minimum(r[:, None, 3], c[None, :, 3]) - np.maximum(r[:, None, 1], c[None, :, 1])
    inter = np.clip(ix, 0.0, None) * np.clip(iy, 0.0, None)
    area_r = (r[:, 2] - r[:, 0]) * (r[:, 3] - r[:, 1])
    area_c = (c[:, 2] - c[:, 0]) * (c[:, 3] - c[:, 1])
    union = area_r[:, None] + area_c[None, :] - inter
    np.divide(inter, union, out=m, where=union > 0.0)
    return m


def rescale(b: BBox, src: ImageDims, dst: ImageDims) -> BBox:
    """Map a box between coordinate spaces by per-axis extent ratios."""
    rx = dst.width / src.width
    ry = dst.height / src.height
    return BBox(b.x1 * rx, b.y1 * ry, b.x2 * rx, b.y2 * ry)


def clamp_to_image(b: BBox, dims: ImageDims) -> BBox:
    """Clamp corners into [0, width] x [0, height]."""

    def cx(v: float) -> float:
        return min(max(v, 0.0), float(dims.width))

    def cy(v: float) -> float:
        return min(max(v, 0.0), float(dims.height))

    return BBox(cx(b.x1), cy(b.y1), cx(b.x2), cy(b.y2))

