"""Compare the numba and numpy kernel paths.

Part one times each kernel in-process through both namespaces. Part two runs
the association benchmark end to end in subprocesses with and without
FMATRACK_DISABLE_NUMBA so the whole pipeline sees one backend.

    python3 benchmarks/bench_kernels.py [--repeat 200] [--objects 10,50]
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import tempfile
import timeit
from pathlib import Path

import numpy as np

from fmatrack import _kernels


def kernel_cases(rng):
    h, w = 720, 1280
    cx = rng.normal(size=(h, w)).astype(np.float32)
    cy = rng.normal(size=(h, w)).astype(np.float32)
    occ = rng.random((h, w)) < 0.7
    fmap = rng.normal(size=(64, 120, 80)).astype(np.float32)
    boxes = np.column_stack([rng.uniform(0, 1200, 100), rng.uniform(0, 650, 100),
                             rng.uniform(20, 60, 100), rng.uniform(40, 120, 100)])
    spans = np.array([[100, 140, 200, 280]] * 50, dtype=np.int64)
    vals = rng.normal(size=(50, 2))
    return {
        "iou_one_to_many": lambda k: k.iou_one_to_many(boxes[0], boxes),
        "iou_matrix": lambda k: k.iou_matrix(boxes, boxes),
        "masked_median": lambda k: k.masked_aggregate(cx, cy, occ, 100, 150, 200, 300, True),
        "masked_mean": lambda k: k.masked_aggregate(cx, cy, occ, 100, 150, 200, 300, False),
        "region_mean": lambda k: k.region_mean(fmap, 10, 60, 20, 110),
        "span_sq_error": lambda k: k.span_sq_error(cx, cy, 100, 150, 200, 300),
        "paint_spans": lambda k: k.paint_spans(np.zeros((h, w)), np.zeros((h, w)),
                                               np.zeros((h, w), bool), spans, vals),
    }


def time_kernels(repeat: int) -> None:
    if _kernels.NUMBA_KERNELS is None:
        print("numba not importable; skipping in-process comparison")
        return
    cases = kernel_cases(np.random.default_rng(0))
    print(f"{'kernel':<18}{'numpy_us':>12}{'numba_us':>12}{'speedup':>10}")
    for name, call in cases.items():
        call(_kernels.NUMBA_KERNELS)  # compile
        t_np = min(timeit.repeat(lambda: call(_kernels.NUMPY_KERNELS), number=repeat, repeat=3)) / repeat
        t_nb = min(timeit.repeat(lambda: call(_kernels.NUMBA_KERNELS), number=repeat, repeat=3)) / repeat
        print(f"{name:<18}{t_np * 1e6:>12.1f}{t_nb * 1e6:>12.1f}{t_np / t_nb:>10.2f}")


def time_pipeline(objects: str, frames: int) -> None:
    with tempfile.TemporaryDirectory() as tmp:
        for label, flag in (("numba", "0"), ("numpy", "1")):
            out = Path(tmp) / f"{label}.csv"
            env = dict(os.environ, FMATRACK_DISABLE_NUMBA=flag)
            subprocess.run([sys.executable, "-m", "fmatrack.cli", "bench", "--objects", objects,
                            "--frames", str(frames), "--out", str(out)],
                           env=env, check=True, stdout=subprocess.DEVNULL)
            print(f"[{label}]")
            print(out.read_text(), end="")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--objects", default="10,50")
    ap.add_argument("--frames", type=int, default=100)
    args = ap.parse_args()
    time_kernels(args.repeat)
    time_pipeline(args.objects, args.frames)


if __name__ == "__main__":
    main()
