import os
import subprocess
import sys

import numpy as np
import pytest

from fmatrack import _kernels

pytestmark = pytest.mark.skipif(_kernels.NUMBA_KERNELS is None, reason="numba not installed")

NP, NB = _kernels.NUMPY_KERNELS, _kernels.NUMBA_KERNELS


def _boxes(rng, n):
    return np.column_stack([rng.uniform(0, 50, n), rng.uniform(0, 50, n),
                            rng.uniform(1, 20, n), rng.uniform(1, 20, n)])


@pytest.mark.parametrize("n", [0, 1, 7])
def test_iou_kernels_agree(rng, n):
    a, b = _boxes(rng, 5), _boxes(rng, n)
    assert np.allclose(NP.iou_matrix(a, b), NB.iou_matrix(a, b), atol=1e-14)
    assert np.allclose(NP.iou_one_to_many(a[0], b), NB.iou_one_to_many(a[0], b), atol=1e-14)


@pytest.mark.parametrize("median", [True, False])
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("fill", [0.0, 0.3, 1.0])
def test_masked_aggregate_agree(rng, median, dtype, fill):
    cx = rng.normal(size=(20, 30)).astype(dtype)
    cy = rng.normal(size=(20, 30)).astype(dtype)
    occ = rng.random((20, 30)) < fill
    for span in ((0, 30, 0, 20), (3, 8, 4, 9), (5, 6, 5, 7)):
        a = NP.masked_aggregate(cx, cy, occ, *span, median)
        b = NB.masked_aggregate(cx, cy, occ, *span, median)
        assert np.allclose(a, b, atol=1e-12)


def test_region_mean_and_sq_error_agree(rng):
    v = rng.normal(size=(5, 12, 14)).astype(np.float32)
    assert np.allclose(NP.region_mean(v, 2, 9, 1, 11), NB.region_mean(v, 2, 9, 1, 11), atol=1e-9)
    a, b = rng.normal(size=(2, 12, 14))
    assert NP.span_sq_error(a, b, 1, 9, 2, 10) == pytest.approx(NB.span_sq_error(a, b, 1, 9, 2, 10), abs=1e-10)


def test_paint_spans_agree(rng):
    spans = np.array([[0, 5, 0, 5], [2, 8, 3, 9], [4, 4, 1, 1]], dtype=np.int64)
    vals = rng.normal(size=(3, 2))
    outs = []
    for k in (NP, NB):
        fx, fy, occ = np.zeros((10, 10)), np.zeros((10, 10)), np.zeros((10, 10), bool)
        k.paint_spans(fx, fy, occ, spans, vals)
        outs.append((fx, fy, occ))
    for x, y in zip(*outs):
        assert np.array_equal(x, y)


def test_env_flag_selects_numpy():
    code = "from fmatrack import _kernels; print(_kernels.USING_NUMBA)"
    env = dict(os.environ, FMATRACK_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
