"""Three-step association of tracks to detections using motion fields and appearance.

Per frame, active tracks are associated to the next frame's detections in
three passes:

1. forward: each track's last box is moved by the forward field and compared
   to the detections by IOU;
2. backward: each remaining detection is moved back by the backward field and
   compared to each remaining track's last box;
3. appearance: remaining tracks take their most similar remaining detection
   when the similarity clears ``tau2``.

Passes 1 and 2 match directly when exactly one detection clears ``tau1``.
Otherwise the appearance score over all unmatched detections decides, falling
back to the best IOU candidate when appearance is not convincing. Leftover
detections start new tracks; tracks unmatched for ``max_age`` frames end.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np

from . import _kernels
from .faf import AppearanceDescriptor, SimilarityModel, crop_descriptor, similarity, similarity_matrix
from .fmf import MotionField, UndecodableBoxError, predict_box
from .geometry import BBox, boxes_to_array

log = logging.getLogger(__name__)

Mode = Literal["fmf_only", "faf_only", "fmf_faf"]
MODES = ("fmf_only", "faf_only", "fmf_faf")
MODE_ALIASES = {"fmf": "fmf_only", "faf": "faf_only", "fma": "fmf_faf"}

FORWARD_SINGLE = "forward_single"
FORWARD_APPEARANCE = "forward_appearance"
FORWARD_TOP_IOU = "forward_top_iou"
BACKWARD_SINGLE = "backward_single"
BACKWARD_APPEARANCE = "backward_appearance"
BACKWARD_TOP_IOU = "backward_top_iou"
APPEARANCE_RESCUE = "appearance_rescue"
APPEARANCE_GREEDY = "appearance_greedy"
BIRTH = "birth"
TERMINATION = "termination"


@dataclass(frozen=True)
class Detection:
    frame_index: int
    box: BBox
    confidence: float = 1.0


@dataclass
class Track:
    id: int
    entries: list[tuple[int, BBox]]
    state: Literal["active", "terminated"] = "active"
    misses: int = 0

    @property
    def birth_frame(self) -> int:
        return self.entries[0][0]

    @property
    def last_frame(self) -> int:
        return self.entries[-1][0]

    @property
    def last_box(self) -> BBox:
        return self.entries[-1][1]

    def box_at(self, frame_index: int) -> Optional[BBox]:
        for f, b in reversed(self.entries):
            if f == frame_index:
                return b
            if f < frame_index:
                break
        return None


@dataclass(frozen=True)
class TrackerConfig:
    tau1: float = 0.45
    tau2: float = 0.5
    aggregator: Literal["mean", "median"] = "median"
    max_age: int = 1
    mode: Mode = "fmf_faf"
    similarity: SimilarityModel = similarity

    def __post_init__(self):
        object.__setattr__(self, "mode", MODE_ALIASES.get(self.mode, self.mode))
        if not 0.0 <= self.tau1 <= 1.0:
            raise ValueError(f"tau1 must lie in [0, 1], got {self.tau1}")
        if not 0.0 <= self.tau2 <= 1.0:
            raise ValueError(f"tau2 must lie in [0, 1], got {self.tau2}")
        if self.max_age < 1:
            raise ValueError(f"max_age must be >= 1, got {self.max_age}")
        if self.aggregator not in ("mean", "median"):
            raise ValueError(f"aggregator must be 'mean' or 'median', got {self.aggregator!r}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def uses_motion(self) -> bool:
        return self.mode != "faf_only"

    @property
    def uses_appearance(self) -> bool:
        return self.mode != "fmf_only"


@dataclass
class FrameBundle:
    """Inputs for associating frame ``frame_index - 1`` with ``frame_index``."""

    frame_index: int
    detections: Sequence[Detection]
    field: Optional[MotionField] = None
    fmap_prev: object = None
    fmap_next: object = None

    def grid_size(self) -> Optional[tuple[int, int]]:
        sizes = {
            name: (x.width, x.height)
            for name, x in (("field", self.field), ("fmap_prev", self.fmap_prev), ("fmap_next", self.fmap_next))
            if x is not None
        }
        if len(set(sizes.values())) > 1:
            raise ValueError(f"grid dimensions differ inside frame bundle {self.frame_index}: {sizes}")
        return next(iter(sizes.values()), None)


@dataclass(frozen=True)
class Assignment:
    track_id: int
    detection_index: int
    branch: str


@dataclass
class FrameReport:
    frame_index: int
    assignments: list[Assignment] = field(default_factory=list)
    births: list[Assignment] = field(default_factory=list)
    terminations: list[int] = field(default_factory=list)
    similarity_evaluations: int = 0

    def branch_of(self, track_id: int) -> Optional[str]:
        for a in self.assignments:
            if a.track_id == track_id:
                return a.branch
        for a in self.births:
            if a.track_id == track_id:
                return a.branch
        if track_id in self.terminations:
            return TERMINATION
        return None

    def branches(self) -> dict[int, str]:
        out = {a.track_id: a.branch for a in self.assignments + self.births}
        out.update({t: TERMINATION for t in self.terminations})
        return out


@dataclass
class TrackerState:
    tracks: list[Track] = field(default_factory=list)
    next_id: int = 1
    frame_index: int = 0

    @property
    def active(self) -> list[Track]:
        return [t for t in self.tracks if t.state == "active"]

    def spawn(self, frame_index: int, box: BBox) -> Track:
        t = Track(self.next_id, [(frame_index, box)])
        self.next_id += 1
        self.tracks.append(t)
        return t


def initial_state(detections: Sequence[Detection], frame_index: int = 1) -> TrackerState:
    state = TrackerState(frame_index=frame_index)
    for d in detections:
        state.spawn(frame_index, d.box)
    return state


class _Association:
    """Scratch state for one call to :func:`advance`."""

    def __init__(self, state: TrackerState, bundle: FrameBundle, cfg: TrackerConfig):
        self.cfg = cfg
        self.bundle = bundle
        self.dets = list(bundle.detections)
        self.det_boxes = boxes_to_array([d.box for d in self.dets])
        self.free = np.ones(len(self.dets), dtype=bool)
        self.report = FrameReport(bundle.frame_index)
        self.matched: dict[int, int] = {}
        self._track_desc: dict[int, AppearanceDescriptor] = {}
        self._det_desc: dict[int, AppearanceDescriptor] = {}
        self._backward: Optional[np.ndarray] = None

    # -- appearance -------------------------------------------------------
    def track_descriptor(self, t: Track) -> AppearanceDescriptor:
        d = self._track_desc.get(t.id)
        if d is None:
            d = crop_descriptor(self.bundle.fmap_prev, t.last_box)
            self._track_desc[t.id] = d
        return d

    def det_descriptor(self, j: int) -> AppearanceDescriptor:
        d = self._det_desc.get(j)
        if d is None:
            d = crop_descriptor(self.bundle.fmap_next, self.dets[j].box)
            self._det_desc[j] = d
        return d

    def best_appearance(self, t: Track) -> tuple[int, float]:
        """Most similar unmatched detection (lowest index on ties), or ``(-1, -inf)``."""
        idx = np.flatnonzero(self.free)
        if idx.size == 0:
            return -1, float("-inf")
        sims = similarity_matrix([self.track_descriptor(t)], [self.det_descriptor(j) for j in idx],
                                 self.cfg.similarity)[0]
        self.report.similarity_evaluations += idx.size
        k = int(np.argmax(sims))
        return int(idx[k]), float(sims[k])

    # -- motion -----------------------------------------------------------
    def forward_ious(self, t: Track) -> np.ndarray:
        try:
            pred = predict_box(self.bundle.field, "forward", t.last_box, self.cfg.aggregator)
        except UndecodableBoxError:
            return np.zeros(len(self.dets))
        return _kernels.iou_one_to_many(pred.as_array(), self.det_boxes)

    def backward_ious(self, t: Track) -> np.ndarray:
        if self._backward is None:
            preds = np.full((len(self.dets), 4), np.nan)
            for j, d in enumerate(self.dets):
                try:
                    preds[j] = predict_box(self.bundle.field, "backward", d.box, self.cfg.aggregator).as_array()
                except UndecodableBoxError:
                    pass
            self._backward = preds
        ious = _kernels.iou_one_to_many(t.last_box.as_array(), self._backward)
        return np.nan_to_num(ious, nan=0.0)

    def candidates(self, ious: np.ndarray) -> list[int]:
        idx = np.flatnonzero(self.free & (ious > self.cfg.tau1))
        return sorted(idx.tolist(), key=lambda j: (-ious[j], j))

    # -- bookkeeping ------------------------------------------------------
    def assign(self, t: Track, j: int, branch: str) -> None:
        self.free[j] = False
        self.matched[t.id] = j
        self.report.assignments.append(Assignment(t.id, j, branch))

    def motion_step(self, tracks: list[Track], ious_of, single: str, by_appearance: str, top_iou: str) -> list[Track]:
        left = []
        for t in tracks:
            cand = self.candidates(ious_of(t))
            if not cand:
                # Deferred: appearance here would shadow the later rescue step.
                left.append(t)
                continue
            if len(cand) == 1:
                self.assign(t, cand[0], single)
                continue
            if self.cfg.uses_appearance:
                j, c = self.best_appearance(t)
                if j >= 0 and c > self.cfg.tau2:
                    self.assign(t, j, by_appearance)
                    continue
            self.assign(t, cand[0], top_iou)
        return left

    def appearance_step(self, tracks: list[Track]) -> list[Track]:
        left = []
        for t in tracks:
            j, c = self.best_appearance(t)
            if j >= 0 and c > self.cfg.tau2:
                self.assign(t, j, APPEARANCE_RESCUE)
            else:
                left.append(t)
        return left

    def greedy_appearance(self, tracks: list[Track]) -> list[Track]:
        idx = np.flatnonzero(self.free)
        if not tracks or idx.size == 0:
            return list(tracks)
        sims = similarity_matrix([self.track_descriptor(t) for t in tracks],
                                 [self.det_descriptor(j) for j in idx], self.cfg.similarity)
        self.report.similarity_evaluations += sims.size
        order = sorted(
            ((r, c) for r in range(len(tracks)) for c in range(idx.size) if sims[r, c] > self.cfg.tau2),
            key=lambda rc: (-sims[rc], idx[rc[1]], tracks[rc[0]].id),
        )
        taken = set()
        for r, c in order:
            t, j = tracks[r], int(idx[c])
            if t.id in taken or not self.free[j]:
                continue
            taken.add(t.id)
            self.assign(t, j, APPEARANCE_GREEDY)
        return [t for t in tracks if t.id not in taken]


def advance(state: TrackerState, bundle: FrameBundle, cfg: TrackerConfig) -> tuple[TrackerState, FrameReport]:
    """Associate ``state``'s active tracks with ``bundle.detections``.

    ``state`` is updated in place and returned with the frame's report.
    """
    bundle.grid_size()
    if cfg.uses_motion and bundle.field is None:
        raise ValueError(f"mode {cfg.mode} needs a motion field for frame {bundle.frame_index}")
    if cfg.uses_appearance and (bundle.fmap_prev is None or bundle.fmap_next is None):
        raise ValueError(f"mode {cfg.mode} needs feature maps for frame {bundle.frame_index}")

    job = _Association(state, bundle, cfg)
    tracks = state.active
    if cfg.mode == "faf_only":
        left = job.greedy_appearance(tracks)
    else:
        left = job.motion_step(tracks, job.forward_ious, FORWARD_SINGLE, FORWARD_APPEARANCE, FORWARD_TOP_IOU)
        left = job.motion_step(left, job.backward_ious, BACKWARD_SINGLE, BACKWARD_APPEARANCE, BACKWARD_TOP_IOU)
        if cfg.uses_appearance:
            left = job.appearance_step(left)

    f = bundle.frame_index
    for t in tracks:
        j = job.matched.get(t.id)
        if j is not None:
            t.entries.append((f, job.dets[j].box))
            t.misses = 0
    for t in left:
        t.misses += 1
        if t.misses >= cfg.max_age:
            t.state = "terminated"
            job.report.terminations.append(t.id)
    for j in np.flatnonzero(job.free):
        t = state.spawn(f, job.dets[j].box)
        job.report.births.append(Assignment(t.id, int(j), BIRTH))
    state.frame_index = f
    return state, job.report


def run_sequence(frames: Sequence[FrameBundle], cfg: TrackerConfig,
                 initial_detections: Sequence[Detection], first_frame: Optional[int] = None,
                 reports: Optional[list] = None) -> list[Track]:
    """Track a whole sequence; returns every track, active and terminated."""
    if first_frame is None:
        if initial_detections:
            first_frame = initial_detections[0].frame_index
        elif frames:
            first_frame = frames[0].frame_index - 1
        else:
            first_frame = 1
    state = initial_state(initial_detections, first_frame)
    for bundle in frames:
        state, report = advance(state, bundle, cfg)
        if reports is not None:
            reports.append(report)
    return state.tracks
