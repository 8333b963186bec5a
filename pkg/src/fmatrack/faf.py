"""Frame-wise appearance features: descriptor pooling, similarity, BCE, pair sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Mapping, Optional, Sequence

import numpy as np

from . import _kernels
from .geometry import BBox, pixel_span, span_is_empty

DEFAULT_CHANNELS = 64
BCE_EPS = 1e-7


class UncroppableBoxError(ValueError):
    """The box covers no pixel of the feature map."""


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Dense appearance map stored channel-major, shape ``(C, height, width)``."""

    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.ndim != 3 or min(v.shape) <= 0:
            raise ValueError(f"feature map must be a non-empty (C, H, W) array, got {v.shape}")
        if v.dtype not in (np.float32, np.float64):
            raise ValueError(f"feature map dtype must be float32 or float64, got {v.dtype}")
        if not np.isfinite(v).all():
            raise ValueError("feature map holds non-finite values")
        v = np.ascontiguousarray(v)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    def pooled(self, span) -> np.ndarray:
        return _kernels.region_mean(self.values, span)

    def to_dense(self) -> "FeatureMap":
        return self

    def __eq__(self, other):
        if not isinstance(other, FeatureMap):
            return NotImplemented
        a, b = self.values, other.values
        return a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()

    __hash__ = None


@dataclass(frozen=True)
class PaintLayer:
    """A constant code painted over a box region, optionally with Gaussian noise."""

    box: BBox
    code: np.ndarray
    noise_sigma: float = 0.0
    noise_seed: tuple = ()


@dataclass(frozen=True, eq=False)
class LayeredFeatureMap:
    """Feature map defined as zero background plus painted rectangles.

    Later layers paint over earlier ones. Only the region a caller pools is
    ever materialized, which keeps large oracle maps cheap; ``to_dense``
    yields the equivalent :class:`FeatureMap`.
    """

    width: int
    height: int
    channels: int
    layers: tuple[PaintLayer, ...] = ()
    dtype: type = np.float32
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def _layer_noise(self, idx: int) -> tuple[tuple[int, int, int, int], np.ndarray]:
        hit = self._cache.get(idx)
        if hit is None:
            layer = self.layers[idx]
            span = pixel_span(layer.box, self.width, self.height)
            x0, x1, y0, y1 = span
            rng = np.random.default_rng(list(layer.noise_seed))
            block = rng.normal(0.0, layer.noise_sigma, size=(self.channels, y1 - y0, x1 - x0)).astype(self.dtype)
            hit = self._cache[idx] = (span, block)
        return hit

    def render(self, span) -> np.ndarray:
        x0, x1, y0, y1 = span
        out = np.zeros((self.channels, y1 - y0, x1 - x0), dtype=self.dtype)
        for i, layer in enumerate(self.layers):
            lx0, lx1, ly0, ly1 = pixel_span(layer.box, self.width, self.height)
            ix0, ix1 = max(x0, lx0), min(x1, lx1)
            iy0, iy1 = max(y0, ly0), min(y1, ly1)
            if ix0 >= ix1 or iy0 >= iy1:
                continue
            dst = out[:, iy0 - y0:iy1 - y0, ix0 - x0:ix1 - x0]
            dst[...] = layer.code.astype(self.dtype)[:, None, None]
            if layer.noise_sigma > 0:
                _, block = self._layer_noise(i)
                dst += block[:, iy0 - ly0:iy1 - ly0, ix0 - lx0:ix1 - lx0]
        return out

    def pooled(self, span) -> np.ndarray:
        # Mean over the window from per-layer visible pixel counts; noise
        # blocks are only materialized for layers that are actually visible.
        x0, x1, y0, y1 = span
        owner = np.full((y1 - y0, x1 - x0), -1, dtype=np.int32)
        hits = []
        for i, layer in enumerate(self.layers):
            lx0, lx1, ly0, ly1 = pixel_span(layer.box, self.width, self.height)
            ix0, ix1 = max(x0, lx0), min(x1, lx1)
            iy0, iy1 = max(y0, ly0), min(y1, ly1)
            if ix0 >= ix1 or iy0 >= iy1:
                continue
            owner[iy0 - y0:iy1 - y0, ix0 - x0:ix1 - x0] = i
            hits.append((i, ix0, ix1, iy0, iy1))
        total = np.zeros(self.channels, dtype=np.float64)
        if hits:
            counts = np.bincount(owner[owner >= 0], minlength=len(self.layers))
            for i, ix0, ix1, iy0, iy1 in hits:
                if counts[i] == 0:
                    continue
                layer = self.layers[i]
                total += counts[i] * layer.code.astype(self.dtype).astype(np.float64)
                if layer.noise_sigma > 0:
                    (lx0, _, ly0, _), block = self._layer_noise(i)
                    mask = owner[iy0 - y0:iy1 - y0, ix0 - x0:ix1 - x0] == i
                    sub = block[:, iy0 - ly0:iy1 - ly0, ix0 - lx0:ix1 - lx0]
                    total += sub[:, mask].sum(axis=1, dtype=np.float64)
        return total / owner.size

    def to_dense(self) -> FeatureMap:
        return FeatureMap(self.render((0, self.width, 0, self.height)))


@dataclass(frozen=True, eq=False)
class AppearanceDescriptor:
    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("descriptor must be a non-empty vector")
        if abs(np.linalg.norm(v) - 1.0) > 1e-6:
            raise ValueError(f"descriptor must have unit norm, got {np.linalg.norm(v)}")
        v.flags.writeable = False
        object.__setattr__(self, "vector", v)

    @classmethod
    def from_vector(cls, v) -> "AppearanceDescriptor":
        """Normalize ``v``; the zero vector maps to the uniform unit vector."""
        v = np.asarray(v, dtype=np.float64)
        n = np.linalg.norm(v)
        if not np.isfinite(n) or n == 0.0:
            return cls(np.full(v.size, 1.0 / math.sqrt(v.size)))
        return cls(v / n)


@dataclass(frozen=True)
class ReIdSample:
    """Verification sample; ``label == 0`` marks a same-object pair."""

    id1: Hashable
    id2: Hashable
    label: int
    pair: Optional[tuple[AppearanceDescriptor, AppearanceDescriptor]] = None

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")


def crop_descriptor(fmap, b: BBox) -> AppearanceDescriptor:
    span = pixel_span(b, fmap.width, fmap.height)
    if span_is_empty(span):
        raise UncroppableBoxError(f"box {b} lies outside the {fmap.width}x{fmap.height} feature map")
    return AppearanceDescriptor.from_vector(fmap.pooled(span))


SimilarityModel = Callable[[AppearanceDescriptor, AppearanceDescriptor], float]


def similarity(a: AppearanceDescriptor, b: AppearanceDescriptor) -> float:
    """Rescaled cosine, ``(1 + cos) / 2``."""
    c = float(np.dot(a.vector, b.vector))
    return min(1.0, max(0.0, 0.5 * (1.0 + c)))


def similarity_matrix(rows: Sequence[AppearanceDescriptor], cols: Sequence[AppearanceDescriptor],
                      model: SimilarityModel = similarity) -> np.ndarray:
    if model is similarity and rows and cols:
        a = np.stack([r.vector for r in rows])
        b = np.stack([c.vector for c in cols])
        return np.clip(0.5 * (1.0 + a @ b.T), 0.0, 1.0)
    out = np.empty((len(rows), len(cols)), dtype=np.float64)
    for i, r in enumerate(rows):
        for j, c in enumerate(cols):
            out[i, j] = model(r, c)
    return out


def bce_loss(predictions: Sequence[float], labels: Sequence[int]) -> float:
    """Mean binary cross-entropy of verifier scores against labels (1 = different object)."""
    h = np.asarray(predictions, dtype=np.float64)
    s = np.asarray(labels, dtype=np.float64)
    if h.shape != s.shape:
        raise ValueError(f"length mismatch: {h.size} predictions vs {s.size} labels")
    if h.size == 0:
        raise ValueError("bce_loss needs at least one sample")
    if not np.isin(s, (0.0, 1.0)).all():
        raise ValueError("labels must be 0 or 1")
    h = np.clip(h, BCE_EPS, 1.0 - BCE_EPS)
    return float(-np.mean(s * np.log(h) + (1.0 - s) * np.log1p(-h)))


NEGATIVES_PER_POSITIVE = 4


def compose_training_pairs(boxes1: Mapping[Hashable, BBox], boxes2: Mapping[Hashable, BBox], seed: int,
                           fmap1=None, fmap2=None) -> list[ReIdSample]:
    """Positives for every identity in both frames, negatives capped at 4 per positive.

    Negatives are drawn without replacement from all ordered cross-identity
    pairs ``(frame-1 identity, frame-2 identity)``. When both feature maps are
    given, each sample also carries the cropped descriptor pair.
    """
    ids1 = sorted(boxes1, key=repr)
    ids2 = sorted(boxes2, key=repr)
    shared = [i for i in ids1 if i in boxes2]
    pool = [(a, b) for a in ids1 for b in ids2 if a != b]
    n_neg = min(NEGATIVES_PER_POSITIVE * len(shared), len(pool))
    rng = np.random.default_rng(seed)
    chosen = sorted(rng.choice(len(pool), size=n_neg, replace=False).tolist()) if n_neg else []

    samples = [(i, i, 0) for i in shared] + [(pool[k][0], pool[k][1], 1) for k in chosen]
    out = []
    for a, b, label in samples:
        pair = None
        if fmap1 is not None and fmap2 is not None:
            pair = (crop_descriptor(fmap1, boxes1[a]), crop_descriptor(fmap2, boxes2[b]))
        out.append(ReIdSample(a, b, label, pair))
    return out
