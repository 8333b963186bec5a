"""CLEAR-MOT evaluation.

Per frame, correspondences that survived from earlier frames are kept while
their IOU stays at or above the threshold. Remaining ground-truth objects and
hypotheses are matched by an optimal one-to-one assignment that maximizes the
summed IOU over pairs clearing the threshold.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _kernels
from .geometry import boxes_to_array

MT_RATIO = 0.8
ML_RATIO = 0.2
COLUMNS = ("MOTA", "MOTP", "MT", "ML", "FP", "FN", "IDSW", "Frag", "Hz")


@dataclass
class MetricsReport:
    MOTA: float
    MOTP: float
    MT: float
    ML: float
    FP: int
    FN: int
    IDSW: int
    Frag: int
    GT: int
    Hz: float = float("nan")
    matches: int = 0
    iou_sum: float = 0.0
    gt_tracks: int = 0
    mostly_tracked: int = 0
    mostly_lost: int = 0
    iou_threshold: float = 0.5

    def row(self) -> list:
        return [getattr(self, c) for c in COLUMNS]

    def to_csv(self) -> str:
        def fmt(v):
            if isinstance(v, (int, np.integer)):
                return str(int(v))
            return "nan" if math.isnan(v) else f"{v:.6f}"

        return ",".join(COLUMNS) + "\n" + ",".join(fmt(v) for v in self.row()) + "\n"

    def to_kv(self) -> str:
        lines = [
            f"# iou_threshold={self.iou_threshold}",
            f"# mostly_tracked_ratio={MT_RATIO}",
            f"# mostly_lost_ratio={ML_RATIO}",
        ]
        lines += [f"{c}={v}" for c, v in zip(COLUMNS, self.row())]
        lines.append(f"GT={self.GT}")
        return "\n".join(lines) + "\n"


@dataclass
class FrameEvents:
    frame_index: int
    matches: dict = field(default_factory=dict)
    false_positives: int = 0
    misses: int = 0
    switches: int = 0


def _normalize(frames) -> dict[int, list]:
    """Accept ``frame -> [(id, box)]`` tables, parsed entries, or a list of tracks."""
    out: dict[int, list] = {}
    if isinstance(frames, Mapping):
        for f, items in frames.items():
            rows = []
            for it in items:
                if hasattr(it, "identity"):
                    rows.append((it.identity, it.box))
                else:
                    rows.append((it[0], it[1]))
            out[int(f)] = rows
        return out
    for t in frames:
        for f, b in t.entries:
            out.setdefault(f, []).append((t.id, b))
    return out


def assign_max_iou(ious: np.ndarray, threshold: float) -> list[tuple[int, int]]:
    """Optimal one-to-one pairs maximizing summed IOU among pairs >= threshold."""
    if ious.size == 0:
        return []
    w = np.where(ious >= threshold, ious, 0.0)
    if not w.any():
        return []
    rows, cols = linear_sum_assignment(w, maximize=True)
    return [(int(r), int(c)) for r, c in zip(rows, cols) if ious[r, c] >= threshold]


def evaluate(gt, hyp, iou_threshold: float = 0.5, hz: Optional[float] = None,
             events: Optional[list] = None, assign=assign_max_iou) -> MetricsReport:
    gt_f = _normalize(gt)
    hyp_f = _normalize(hyp)
    total_gt = sum(len(v) for v in gt_f.values())
    if total_gt == 0:
        raise ValueError("ground truth is empty; MOTA is undefined")

    last_match: dict = {}
    matched_count: dict = {}
    present_count: dict = {}
    tracked_before: dict = {}
    gap_open: dict = {}
    frag = fp = fn = idsw = n_match = 0
    iou_sum = 0.0

    for f in sorted(set(gt_f) | set(hyp_f)):
        g_rows = sorted(gt_f.get(f, []), key=lambda r: r[0])
        h_rows = sorted(hyp_f.get(f, []), key=lambda r: r[0])
        g_ids = [r[0] for r in g_rows]
        h_ids = [r[0] for r in h_rows]
        ious = _kernels.iou_matrix(boxes_to_array([r[1] for r in g_rows]), boxes_to_array([r[1] for r in h_rows]))
        h_index = {h: j for j, h in enumerate(h_ids)}

        pairs: dict[int, int] = {}
        used_h = set()
        for i, g in enumerate(g_ids):
            h = last_match.get(g)
            j = h_index.get(h) if h is not None else None
            if j is not None and j not in used_h and ious[i, j] >= iou_threshold:
                pairs[i] = j
                used_h.add(j)
        free_g = [i for i in range(len(g_ids)) if i not in pairs]
        free_h = [j for j in range(len(h_ids)) if j not in used_h]
        if free_g and free_h:
            sub = ious[np.ix_(free_g, free_h)]
            for r, c in assign(sub, iou_threshold):
                pairs[free_g[r]] = free_h[c]

        ev = FrameEvents(f)
        for i, g in enumerate(g_ids):
            present_count[g] = present_count.get(g, 0) + 1
            j = pairs.get(i)
            if j is None:
                fn += 1
                ev.misses += 1
                if tracked_before.get(g):
                    gap_open[g] = True
                continue
            h = h_ids[j]
            if g in last_match and last_match[g] != h:
                idsw += 1
                ev.switches += 1
            if gap_open.get(g):
                frag += 1
                gap_open[g] = False
            last_match[g] = h
            tracked_before[g] = True
            matched_count[g] = matched_count.get(g, 0) + 1
            n_match += 1
            iou_sum += float(ious[i, j])
            ev.matches[g] = h
        n_fp = len(h_ids) - len(pairs)
        fp += n_fp
        ev.false_positives = n_fp
        if events is not None:
            events.append(ev)

    n_tracks = len(present_count)
    mt = sum(1 for g, n in present_count.items() if matched_count.get(g, 0) >= MT_RATIO * n)
    ml = sum(1 for g, n in present_count.items() if matched_count.get(g, 0) <= ML_RATIO * n)
    return MetricsReport(
        MOTA=1.0 - (fp + fn + idsw) / total_gt,
        MOTP=iou_sum / n_match if n_match else 0.0,
        MT=mt / n_tracks,
        ML=ml / n_tracks,
        FP=fp, FN=fn, IDSW=idsw, Frag=frag, GT=total_gt,
        Hz=float("nan") if hz is None else float(hz),
        matches=n_match, iou_sum=iou_sum, gt_tracks=n_tracks, mostly_tracked=mt, mostly_lost=ml,
        iou_threshold=iou_threshold,
    )


def pool(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Sum event counts over sequences and recompute the derived scores."""
    if not reports:
        raise ValueError("nothing to pool")
    s = lambda k: sum(getattr(r, k) for r in reports)
    gt, n_match, n_tracks = s("GT"), s("matches"), s("gt_tracks")
    fp, fn, idsw = s("FP"), s("FN"), s("IDSW")
    hz = [r.Hz for r in reports if not math.isnan(r.Hz)]
    return MetricsReport(
        MOTA=1.0 - (fp + fn + idsw) / gt,
        MOTP=s("iou_sum") / n_match if n_match else 0.0,
        MT=s("mostly_tracked") / n_tracks, ML=s("mostly_lost") / n_tracks,
        FP=fp, FN=fn, IDSW=idsw, Frag=s("Frag"), GT=gt,
        Hz=float(np.mean(hz)) if hz else float("nan"),
        matches=n_match, iou_sum=s("iou_sum"), gt_tracks=n_tracks,
        mostly_tracked=s("mostly_tracked"), mostly_lost=s("mostly_lost"),
        iou_threshold=reports[0].iou_threshold,
    )


def throughput(timings: Iterable[float]) -> float:
    """Frames per second for a list of per-frame wall-clock durations."""
    t = [float(x) for x in timings]
    if not t:
        raise ValueError("throughput needs at least one timing")
    total = sum(t)
    if total <= 0:
        raise ValueError("total time must be positive")
    return len(t) / total
