"""Frame-wise motion fields: ground-truth encoding, per-box decoding, MSE loss.

A motion field between a former frame and a latter frame holds four dense
channels. ``fx1, fy1`` live on former-frame pixels and carry the displacement
that moves each box forward; ``fx2, fy2`` live on latter-frame pixels and
carry the backward displacement. Values are constant per box: the
displacement between box centers.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Literal, Sequence

import numpy as np

from . import _kernels
from .geometry import BBox, pixel_span, shift, span_is_empty

Direction = Literal["forward", "backward"]
Aggregator = Literal["mean", "median"]

CHANNELS = ("fx1", "fy1", "fx2", "fy2")


class UndecodableBoxError(ValueError):
    """The box covers no pixel of the field grid."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class MotionField:
    """Dense bi-directional motion field.

    ``values`` stacks the channels ``fx1, fy1, fx2, fy2`` as a ``(4, H, W)``
    array; ``occupancy`` stacks the frame-1 and frame-2 masks as ``(2, H, W)``.
    """

    values: np.ndarray
    occupancy: np.ndarray

    def __post_init__(self):
        v, occ = self.values, self.occupancy
        if v.ndim != 3 or v.shape[0] != 4 or v.shape[1] <= 0 or v.shape[2] <= 0:
            raise ValueError(f"motion field values must have shape (4, H, W), got {v.shape}")
        if v.dtype not in (np.float32, np.float64):
            raise ValueError(f"motion field dtype must be float32 or float64, got {v.dtype}")
        if occ.shape != (2,) + v.shape[1:] or occ.dtype != np.bool_:
            raise ValueError(f"occupancy must be a boolean (2, H, W) array, got {occ.dtype} {occ.shape}")
        if not np.isfinite(v).all():
            raise ValueError("motion field holds non-finite values")
        for k in range(2):
            if np.any(v[2 * k:2 * k + 2][:, ~occ[k]]):
                raise ValueError(f"frame-{k + 1} channels must be zero outside occupancy")
        object.__setattr__(self, "values", _frozen(v))
        object.__setattr__(self, "occupancy", _frozen(occ))

    @classmethod
    def from_channels(cls, fx1, fy1, fx2, fy2, occupancy1, occupancy2) -> "MotionField":
        return cls(np.stack([fx1, fy1, fx2, fy2]), np.stack([occupancy1, occupancy2]))

    @classmethod
    def _unchecked(cls, values, occupancy) -> "MotionField":
        # For fields built by this module, whose invariants hold by construction.
        self = object.__new__(cls)
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "occupancy", _frozen(occupancy))
        return self

    @classmethod
    def zeros(cls, width: int, height: int, dtype=np.float64) -> "MotionField":
        return cls(np.zeros((4, height, width), dtype=dtype), np.zeros((2, height, width), dtype=bool))

    fx1 = property(lambda self: self.values[0])
    fy1 = property(lambda self: self.values[1])
    fx2 = property(lambda self: self.values[2])
    fy2 = property(lambda self: self.values[3])
    occupancy1 = property(lambda self: self.occupancy[0])
    occupancy2 = property(lambda self: self.occupancy[1])

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    @property
    def dtype(self):
        return self.values.dtype

    def channels(self, direction: Direction) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if direction == "forward":
            return self.values[0], self.values[1], self.occupancy[0]
        if direction == "backward":
            return self.values[2], self.values[3], self.occupancy[1]
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")

    def window(self, direction: Direction, span) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x0, x1, y0, y1 = span
        cx, cy, occ = self.channels(direction)
        return cx[y0:y1, x0:x1], cy[y0:y1, x0:x1], occ[y0:y1, x0:x1]

    def to_dense(self) -> "MotionField":
        return self

    def __eq__(self, other):
        if not isinstance(other, MotionField):
            return NotImplemented
        return all(
            a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in ((self.values, other.values), (self.occupancy, other.occupancy))
        )

    __hash__ = None


@dataclass(frozen=True)
class BoxMatch:
    box1: BBox
    box2: BBox
    identity: Hashable

    @property
    def displacement(self) -> tuple[float, float]:
        (x1, y1), (x2, y2) = self.box1.center, self.box2.center
        return x2 - x1, y2 - y1


def _paint_order(boxes: Sequence[BBox]) -> list[int]:
    # Painted last wins: largest first, and among equal areas the lowest index last.
    return sorted(range(len(boxes)), key=lambda i: (-boxes[i].area, -i))


def _paint(values, occupancy, k, boxes, disp):
    order = _paint_order(boxes)
    w, h = values.shape[2], values.shape[1]
    spans = np.array([pixel_span(boxes[i], w, h) for i in order], dtype=np.int64).reshape(-1, 4)
    vals = np.array([disp[i] for i in order], dtype=np.float64).reshape(-1, 2).astype(values.dtype)
    _kernels.paint_spans(values[2 * k], values[2 * k + 1], occupancy[k], spans, vals)


def _check_matches(matches: Sequence[BoxMatch], width: int, height: int) -> None:
    seen = set()
    for m in matches:
        if m.identity in seen:
            raise ValueError(f"duplicate identity {m.identity!r} in matches")
        seen.add(m.identity)
        for b in (m.box1, m.box2):
            if span_is_empty(pixel_span(b, width, height)):
                raise UndecodableBoxError(f"box {b} of identity {m.identity!r} lies outside the {width}x{height} grid")


def encode_ground_truth(matches: Sequence[BoxMatch], width: int, height: int,
                        dtype=np.float64) -> MotionField:
    """Build the ground-truth field for boxes associated across two frames.

    Former-frame pixels of each match carry ``center(box2) - center(box1)``;
    latter-frame pixels carry its negation. Where boxes overlap, the box with
    the smallest area owns the pixel (ties go to the lowest list index).
    """
    if width <= 0 or height <= 0:
        raise ValueError(f"grid dimensions must be positive, got {width}x{height}")
    _check_matches(matches, width, height)
    fwd = [m.displacement for m in matches]
    bwd = [(-dx, -dy) for dx, dy in fwd]
    values = np.zeros((4, height, width), dtype=dtype)
    occupancy = np.zeros((2, height, width), dtype=bool)
    _paint(values, occupancy, 0, [m.box1 for m in matches], fwd)
    _paint(values, occupancy, 1, [m.box2 for m in matches], bwd)
    return MotionField._unchecked(values, occupancy)


def box_displacement(field: MotionField, direction: Direction, b: BBox,
                     aggregator: Aggregator = "median") -> tuple[float, float]:
    """Aggregate field values over the pixels the box covers.

    Only occupied pixels are used unless the box covers none, in which case
    every covered pixel counts.
    """
    if aggregator not in ("mean", "median"):
        raise ValueError(f"aggregator must be 'mean' or 'median', got {aggregator!r}")
    span = pixel_span(b, field.width, field.height)
    if span_is_empty(span):
        raise UndecodableBoxError(f"box {b} lies outside the {field.width}x{field.height} field")
    x0, x1, y0, y1 = span
    cx, cy, occ = field.window(direction, span)
    return _kernels.masked_aggregate(cx, cy, occ, (0, x1 - x0, 0, y1 - y0), aggregator == "median")


class LayeredMotionField:
    """Ground-truth field kept as its box list and rasterized on demand.

    Decoding a box only paints the boxes overlapping its pixel window, so the
    cost does not depend on the frame size. ``to_dense`` renders the whole
    grid and equals :func:`encode_ground_truth` (plus the same noise draws).
    Noise, when requested, is drawn per box block from a seeded stream, so
    every occupied pixel gets one independent Gaussian draw regardless of
    which window asks for it.
    """

    def __init__(self, matches: Sequence[BoxMatch], width: int, height: int, dtype=np.float64,
                 noise_sigma: float = 0.0, noise_seed: tuple = ()):
        if width <= 0 or height <= 0:
            raise ValueError(f"grid dimensions must be positive, got {width}x{height}")
        _check_matches(matches, width, height)
        self.width, self.height = width, height
        self.dtype = np.dtype(dtype)
        self.noise_sigma = float(noise_sigma)
        self.noise_seed = tuple(noise_seed)
        fwd = [m.displacement for m in matches]
        self._sides = []
        for k, boxes, disp in ((0, [m.box1 for m in matches], fwd),
                               (1, [m.box2 for m in matches], [(-dx, -dy) for dx, dy in fwd])):
            order = _paint_order(boxes)
            spans = np.array([pixel_span(boxes[i], width, height) for i in order], dtype=np.int64).reshape(-1, 4)
            vals = np.array([disp[i] for i in order], dtype=np.float64).reshape(-1, 2).astype(self.dtype)
            self._sides.append((spans, vals, order))
        self._noise_cache: dict = {}

    def _noise(self, k: int, box_index: int, span) -> np.ndarray:
        key = (k, box_index)
        hit = self._noise_cache.get(key)
        if hit is None:
            x0, x1, y0, y1 = span
            rng = np.random.default_rng(list(self.noise_seed) + [k, box_index])
            hit = rng.normal(0.0, self.noise_sigma, size=(2, y1 - y0, x1 - x0)).astype(self.dtype)
            self._noise_cache[key] = hit
        return hit

    def window(self, direction: Direction, span) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if direction not in ("forward", "backward"):
            raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
        k = 0 if direction == "forward" else 1
        spans, vals, order = self._sides[k]
        x0, x1, y0, y1 = span
        cx = np.zeros((y1 - y0, x1 - x0), dtype=self.dtype)
        cy = np.zeros_like(cx)
        occ = np.zeros(cx.shape, dtype=bool)
        if spans.shape[0] == 0:
            return cx, cy, occ
        ix0 = np.maximum(spans[:, 0], x0)
        ix1 = np.minimum(spans[:, 1], x1)
        iy0 = np.maximum(spans[:, 2], y0)
        iy1 = np.minimum(spans[:, 3], y1)
        hits = np.flatnonzero((ix0 < ix1) & (iy0 < iy1))
        local = np.stack([ix0 - x0, ix1 - x0, iy0 - y0, iy1 - y0], axis=1)[hits]
        _kernels.paint_spans(cx, cy, occ, np.ascontiguousarray(local), np.ascontiguousarray(vals[hits]))
        if self.noise_sigma > 0:
            # Paint noise in the same order so the owner's draw lands last.
            nx = np.zeros_like(cx)
            ny = np.zeros_like(cx)
            for h in hits:
                sx0, sx1, sy0, sy1 = spans[h]
                noise = self._noise(k, order[h], spans[h])
                a0, a1, b0, b1 = ix0[h], ix1[h], iy0[h], iy1[h]
                nx[b0 - y0:b1 - y0, a0 - x0:a1 - x0] = noise[0, b0 - sy0:b1 - sy0, a0 - sx0:a1 - sx0]
                ny[b0 - y0:b1 - y0, a0 - x0:a1 - x0] = noise[1, b0 - sy0:b1 - sy0, a0 - sx0:a1 - sx0]
            cx += nx
            cy += ny
        return cx, cy, occ

    def to_dense(self) -> MotionField:
        span = (0, self.width, 0, self.height)
        fx1, fy1, o1 = self.window("forward", span)
        fx2, fy2, o2 = self.window("backward", span)
        return MotionField._unchecked(np.stack([fx1, fy1, fx2, fy2]), np.stack([o1, o2]))


def predict_box(field: MotionField, direction: Direction, b: BBox,
                aggregator: Aggregator = "median") -> BBox:
    dx, dy = box_displacement(field, direction, b, aggregator)
    return shift(b, dx, dy)


def mse_loss(predicted: MotionField, truth: MotionField, matches: Sequence[BoxMatch]) -> float:
    """Squared error of the x and y channels summed over every match's box pixels.

    Frame-1 channels are compared on ``box1`` pixels and frame-2 channels on
    ``box2`` pixels. Overlapping boxes each contribute their own pixels, so a
    shared pixel counts once per box.
    """
    predicted, truth = predicted.to_dense(), truth.to_dense()
    if (predicted.width, predicted.height) != (truth.width, truth.height):
        raise ValueError(
            f"field dimensions differ: {predicted.width}x{predicted.height} vs {truth.width}x{truth.height}"
        )
    total = 0.0
    w, h = truth.width, truth.height
    for m in matches:
        for box, (px, py), (tx, ty) in (
            (m.box1, (predicted.fx1, predicted.fy1), (truth.fx1, truth.fy1)),
            (m.box2, (predicted.fx2, predicted.fy2), (truth.fx2, truth.fy2)),
        ):
            span = pixel_span(box, w, h)
            if span_is_empty(span):
                continue
            total += _kernels.span_sq_error(px, tx, span) + _kernels.span_sq_error(py, ty, span)
    return total


def add_noise(field: MotionField, sigma: float, rng: np.random.Generator) -> MotionField:
    """Copy of ``field`` with i.i.d. Gaussian noise added on occupied pixels."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return field
    values = field.values.copy()
    for k in range(2):
        occ = field.occupancy[k]
        n = int(occ.sum())
        for c in (2 * k, 2 * k + 1):
            values[c][occ] += rng.normal(0.0, sigma, size=n).astype(values.dtype)
    return MotionField._unchecked(values, field.occupancy)
