"""Per-frame association latency across object counts."""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass

import numpy as np

from .simulator import ScenarioConfig, generate
from .tracker import TrackerConfig, advance, initial_state


@dataclass
class BenchRow:
    objects: int
    mean_ms: float
    p95_ms: float
    hz: float


def time_association(scenario, cfg: TrackerConfig) -> list[float]:
    """Wall-clock seconds spent in ``advance`` for each frame after the first."""
    state = initial_state(scenario.initial_detections, 1)
    timings = []
    for bundle in scenario.bundles():
        t0 = time.perf_counter()
        advance(state, bundle, cfg)
        timings.append(time.perf_counter() - t0)
    return timings


def bench_config(objects: int, frames: int, seed: int, width: int = 1280, height: int = 720) -> ScenarioConfig:
    return ScenarioConfig(seed=seed, frame_count=frames, width=width, height=height, agent_count=objects,
                          center_jitter=1.0, size_jitter=0.5)


def _warm_up(cfg: TrackerConfig) -> None:
    # Triggers numba compilation outside the timed region.
    sc = generate(ScenarioConfig(seed=0, frame_count=3, width=160, height=120, agent_count=3,
                                 box_width_min=10, box_width_max=20, box_height_min=20, box_height_max=30,
                                 center_jitter=1.0, channels=8))
    time_association(sc, cfg)


def run_benchmark(objects, frames: int = 200, seed: int = 7, cfg: TrackerConfig | None = None,
                  width: int = 1280, height: int = 720) -> list[BenchRow]:
    cfg = cfg or TrackerConfig()
    _warm_up(cfg)
    rows = []
    for n in sorted(set(int(o) for o in objects)):
        sc = generate(bench_config(n, frames, seed, width, height))
        ms = np.asarray(time_association(sc, cfg)) * 1e3
        mean = float(ms.mean()) if ms.size else 0.0
        rows.append(BenchRow(n, mean, float(np.percentile(ms, 95)) if ms.size else 0.0,
                             1e3 / mean if mean > 0 else float("inf")))
    return rows


def rows_to_csv(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["objects", "mean_ms", "p95_ms", "hz"])
    for r in rows:
        w.writerow([r.objects, f"{r.mean_ms:.4f}", f"{r.p95_ms:.4f}", f"{r.hz:.2f}"])
    return buf.getvalue()
