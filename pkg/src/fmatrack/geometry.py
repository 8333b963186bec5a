"""Axis-aligned box arithmetic.

Boxes live in continuous pixel coordinates ``(left, top, width, height)``.
Rasterization uses the cell-center rule: integer pixel ``(x, y)`` is covered
when its center ``(x + 0.5, y + 0.5)`` satisfies ``left < cx <= right`` and
``top < cy <= bottom``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, slots=True)
class BBox:
    left: float
    top: float
    width: float
    height: float

    def __post_init__(self):
        for name in ("left", "top", "width", "height"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"BBox.{name} must be finite, got {getattr(self, name)!r}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"BBox needs positive size, got {self.width}x{self.height}")

    @property
    def right(self) -> float:
        return self.left + self.width

    @property
    def bottom(self) -> float:
        return self.top + self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.left + self.width / 2.0, self.top + self.height / 2.0)

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_array(self) -> np.ndarray:
        return np.array([self.left, self.top, self.width, self.height], dtype=np.float64)

    @classmethod
    def from_center(cls, cx: float, cy: float, width: float, height: float) -> "BBox":
        return cls(cx - width / 2.0, cy - height / 2.0, width, height)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union, computed analytically."""
    iw = min(a.right, b.right) - max(a.left, b.left)
    ih = min(a.bottom, b.bottom) - max(a.top, b.top)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return min(1.0, inter / union)


def shift(b: BBox, dx: float, dy: float) -> BBox:
    return BBox(b.left + dx, b.top + dy, b.width, b.height)


def pixel_span(b: BBox, grid_w: int, grid_h: int) -> tuple[int, int, int, int]:
    """Half-open index ranges ``(x0, x1, y0, y1)`` of covered pixels, clipped.

    The span is empty (``x0 >= x1`` or ``y0 >= y1``) when the box covers no
    pixel center inside the grid.
    """
    if grid_w <= 0 or grid_h <= 0:
        raise ValueError(f"grid dimensions must be positive, got {grid_w}x{grid_h}")
    x0 = math.floor(b.left - 0.5) + 1
    x1 = math.floor(b.right - 0.5) + 1
    y0 = math.floor(b.top - 0.5) + 1
    y1 = math.floor(b.bottom - 0.5) + 1
    x0, x1 = max(x0, 0), min(x1, grid_w)
    y0, y1 = max(y0, 0), min(y1, grid_h)
    return x0, max(x1, x0), y0, max(y1, y0)


def span_is_empty(span: tuple[int, int, int, int]) -> bool:
    x0, x1, y0, y1 = span
    return x1 <= x0 or y1 <= y0


def covered_pixels(b: BBox, grid_w: int, grid_h: int) -> set[tuple[int, int]]:
    x0, x1, y0, y1 = pixel_span(b, grid_w, grid_h)
    return {(x, y) for y in range(y0, y1) for x in range(x0, x1)}


def boxes_to_array(boxes) -> np.ndarray:
    """Stack boxes into an ``(n, 4)`` float64 array of ``left, top, width, height``."""
    out = np.empty((len(boxes), 4), dtype=np.float64)
    for i, b in enumerate(boxes):
        out[i] = (b.left, b.top, b.width, b.height)
    return out
