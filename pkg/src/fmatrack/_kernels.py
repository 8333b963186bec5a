"""Hot numeric kernels with a numba path and a pure-numpy path.

The numba path is used when numba imports and ``FMATRACK_DISABLE_NUMBA`` is
unset or ``0``. Both implementations live here side by side so tests and the
kernel benchmark can call either one directly through ``NUMPY_KERNELS`` and
``NUMBA_KERNELS``.
"""
from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

_FLAG = os.environ.get("FMATRACK_DISABLE_NUMBA", "0").strip().lower()
NUMBA_REQUESTED = _FLAG in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover - numba is optional
    numba = None


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _np_iou_one_to_many(box, boxes):
    if boxes.shape[0] == 0:
        return np.zeros(0, dtype=np.float64)
    l = np.maximum(box[0], boxes[:, 0])
    t = np.maximum(box[1], boxes[:, 1])
    r = np.minimum(box[0] + box[2], boxes[:, 0] + boxes[:, 2])
    b = np.minimum(box[1] + box[3], boxes[:, 1] + boxes[:, 3])
    inter = np.clip(r - l, 0.0, None) * np.clip(b - t, 0.0, None)
    union = box[2] * box[3] + boxes[:, 2] * boxes[:, 3] - inter
    return np.minimum(inter / union, 1.0)


def _np_iou_matrix(a, b):
    if a.shape[0] == 0 or b.shape[0] == 0:
        return np.zeros((a.shape[0], b.shape[0]), dtype=np.float64)
    l = np.maximum(a[:, None, 0], b[None, :, 0])
    t = np.maximum(a[:, None, 1], b[None, :, 1])
    r = np.minimum(a[:, None, 0] + a[:, None, 2], b[None, :, 0] + b[None, :, 2])
    bt = np.minimum(a[:, None, 1] + a[:, None, 3], b[None, :, 1] + b[None, :, 3])
    inter = np.clip(r - l, 0.0, None) * np.clip(bt - t, 0.0, None)
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None, :] - inter
    return np.minimum(inter / union, 1.0)


def _np_median(v):
    # np.median minus its nan checks; same midpoint rule for even counts.
    n = v.size
    k = n // 2
    if n % 2:
        return float(np.partition(v, k)[k])
    p = np.partition(v, (k - 1, k))
    return 0.5 * (float(p[k - 1]) + float(p[k]))


def _np_masked_aggregate(cx, cy, occ, x0, x1, y0, y1, use_median):
    wx = cx[y0:y1, x0:x1]
    wy = cy[y0:y1, x0:x1]
    mask = occ[y0:y1, x0:x1]
    if mask.any():
        vx = wx[mask].astype(np.float64)
        vy = wy[mask].astype(np.float64)
    else:
        vx = wx.astype(np.float64).ravel()
        vy = wy.astype(np.float64).ravel()
    if use_median:
        return _np_median(vx), _np_median(vy)
    return float(vx.mean()), float(vy.mean())


def _np_paint_spans(fx, fy, occ, spans, values):
    for i in range(spans.shape[0]):
        x0, x1, y0, y1 = spans[i]
        fx[y0:y1, x0:x1] = values[i, 0]
        fy[y0:y1, x0:x1] = values[i, 1]
        occ[y0:y1, x0:x1] = True


def _np_region_mean(values, x0, x1, y0, y1):
    return values[:, y0:y1, x0:x1].mean(axis=(1, 2), dtype=np.float64)


def _np_span_sq_error(a, b, x0, x1, y0, y1):
    d = a[y0:y1, x0:x1].astype(np.float64) - b[y0:y1, x0:x1].astype(np.float64)
    return float(np.sum(d * d))


NUMPY_KERNELS = SimpleNamespace(
    name="numpy",
    iou_one_to_many=_np_iou_one_to_many,
    iou_matrix=_np_iou_matrix,
    masked_aggregate=_np_masked_aggregate,
    paint_spans=_np_paint_spans,
    region_mean=_np_region_mean,
    span_sq_error=_np_span_sq_error,
)


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

def _build_numba_kernels():
    njit = numba.njit(cache=True, nogil=True)

    @njit
    def iou_one_to_many(box, boxes):
        n = boxes.shape[0]
        out = np.zeros(n, dtype=np.float64)
        area = box[2] * box[3]
        for j in range(n):
            iw = min(box[0] + box[2], boxes[j, 0] + boxes[j, 2]) - max(box[0], boxes[j, 0])
            ih = min(box[1] + box[3], boxes[j, 1] + boxes[j, 3]) - max(box[1], boxes[j, 1])
            if iw > 0.0 and ih > 0.0:
                inter = iw * ih
                v = inter / (area + boxes[j, 2] * boxes[j, 3] - inter)
                out[j] = v if v < 1.0 else 1.0
        return out

    @njit
    def iou_matrix(a, b):
        out = np.zeros((a.shape[0], b.shape[0]), dtype=np.float64)
        for i in range(a.shape[0]):
            area = a[i, 2] * a[i, 3]
            for j in range(b.shape[0]):
                iw = min(a[i, 0] + a[i, 2], b[j, 0] + b[j, 2]) - max(a[i, 0], b[j, 0])
                ih = min(a[i, 1] + a[i, 3], b[j, 1] + b[j, 3]) - max(a[i, 1], b[j, 1])
                if iw > 0.0 and ih > 0.0:
                    inter = iw * ih
                    v = inter / (area + b[j, 2] * b[j, 3] - inter)
                    out[i, j] = v if v < 1.0 else 1.0
        return out

    @njit
    def masked_aggregate(cx, cy, occ, x0, x1, y0, y1, use_median):
        n = (x1 - x0) * (y1 - y0)
        bx = np.empty(n, dtype=np.float64)
        by = np.empty(n, dtype=np.float64)
        k = 0
        for y in range(y0, y1):
            for x in range(x0, x1):
                if occ[y, x]:
                    bx[k] = cx[y, x]
                    by[k] = cy[y, x]
                    k += 1
        if k == 0:
            for y in range(y0, y1):
                for x in range(x0, x1):
                    bx[k] = cx[y, x]
                    by[k] = cy[y, x]
                    k += 1
        if use_median:
            return np.median(bx[:k]), np.median(by[:k])
        sx = 0.0
        sy = 0.0
        for i in range(k):
            sx += bx[i]
            sy += by[i]
        return sx / k, sy / k

    @njit
    def paint_spans(fx, fy, occ, spans, values):
        for i in range(spans.shape[0]):
            vx = values[i, 0]
            vy = values[i, 1]
            for y in range(spans[i, 2], spans[i, 3]):
                for x in range(spans[i, 0], spans[i, 1]):
                    fx[y, x] = vx
                    fy[y, x] = vy
                    occ[y, x] = True

    @njit
    def region_mean(values, x0, x1, y0, y1):
        c = values.shape[0]
        out = np.zeros(c, dtype=np.float64)
        for ch in range(c):
            s = 0.0
            for y in range(y0, y1):
                for x in range(x0, x1):
                    s += values[ch, y, x]
            out[ch] = s
        return out / ((x1 - x0) * (y1 - y0))

    @njit
    def span_sq_error(a, b, x0, x1, y0, y1):
        s = 0.0
        for y in range(y0, y1):
            for x in range(x0, x1):
                d = np.float64(a[y, x]) - np.float64(b[y, x])
                s += d * d
        return s

    return SimpleNamespace(
        name="numba",
        iou_one_to_many=iou_one_to_many,
        iou_matrix=iou_matrix,
        masked_aggregate=masked_aggregate,
        paint_spans=paint_spans,
        region_mean=region_mean,
        span_sq_error=span_sq_error,
    )


NUMBA_KERNELS = _build_numba_kernels() if numba is not None else None

ACTIVE = NUMBA_KERNELS if (NUMBA_REQUESTED and NUMBA_KERNELS is not None) else NUMPY_KERNELS
USING_NUMBA = ACTIVE is NUMBA_KERNELS and NUMBA_KERNELS is not None


def masked_aggregate(cx, cy, occ, span, use_median):
    x0, x1, y0, y1 = span
    dx, dy = ACTIVE.masked_aggregate(cx, cy, occ, x0, x1, y0, y1, use_median)
    return float(dx), float(dy)


def region_mean(values, span):
    x0, x1, y0, y1 = span
    return ACTIVE.region_mean(values, x0, x1, y0, y1)


def span_sq_error(a, b, span):
    x0, x1, y0, y1 = span
    return float(ACTIVE.span_sq_error(a, b, x0, x1, y0, y1))


def iou_one_to_many(box, boxes):
    return ACTIVE.iou_one_to_many(box, boxes)


def iou_matrix(a, b):
    return ACTIVE.iou_matrix(a, b)


def paint_spans(fx, fy, occ, spans, values):
    ACTIVE.paint_spans(fx, fy, occ, spans, values)
