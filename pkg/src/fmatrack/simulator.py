"""Synthetic scenes: trajectories, noisy detections, oracle motion fields and feature maps.

Oracle fields are exact ground-truth encodings of consecutive boxes (plus
optional Gaussian noise on occupied pixels). Oracle feature maps paint each
identity's fixed random unit code over its box, so appearance is decidable
whenever codes differ. Everything is a deterministic function of the seed;
per-frame noise draws use their own seeded streams, so fields and maps can be
built lazily and in any order.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Literal, Optional

import numpy as np

from .faf import DEFAULT_CHANNELS, LayeredFeatureMap, PaintLayer
from .fmf import BoxMatch, LayeredMotionField
from .geometry import BBox
from .motchallenge import (
    GroundTruthEntry,
    SequenceInfo,
    write_detections,
    write_field,
    write_fmap,
    write_ground_truth,
    write_seqinfo,
)
from .tracker import Detection, FrameBundle

CODE_COSINE_LIMIT = 0.7
TRUE_CONFIDENCE = 0.9
FALSE_CONFIDENCE = 0.3


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    frame_count: int = 100
    width: int = 1280
    height: int = 720
    agent_count: int = 10
    kind: Literal["random", "crossing"] = "random"
    motion: Literal["linear", "sinusoidal", "mixed"] = "linear"
    speed_min: float = 1.0
    speed_max: float = 4.0
    amplitude: float = 8.0
    period: float = 40.0
    box_width_min: float = 30.0
    box_width_max: float = 60.0
    box_height_min: float = 60.0
    box_height_max: float = 120.0
    entry_prob: float = 0.0
    exit_prob: float = 0.0
    center_jitter: float = 0.0
    size_jitter: float = 0.0
    miss_prob: float = 0.0
    fp_rate: float = 0.0
    field_noise: float = 0.0
    appearance_noise: float = 0.0
    max_overlap: float = 1.0
    channels: int = DEFAULT_CHANNELS
    pair_stride: int = 1

    def __post_init__(self):
        if self.frame_count < 1 or self.width <= 0 or self.height <= 0 or self.channels < 1:
            raise ValueError("frame_count, width, height and channels must be positive")
        if self.agent_count < 0:
            raise ValueError("agent_count must be non-negative")
        for p in ("entry_prob", "exit_prob", "miss_prob", "max_overlap"):
            if not 0.0 <= getattr(self, p) <= 1.0:
                raise ValueError(f"{p} must lie in [0, 1]")
        for s in ("center_jitter", "size_jitter", "field_noise", "appearance_noise", "fp_rate", "amplitude"):
            if getattr(self, s) < 0:
                raise ValueError(f"{s} must be non-negative")
        if not 0 < self.speed_min <= self.speed_max and not self.speed_min == self.speed_max == 0:
            raise ValueError("speed range must satisfy 0 < speed_min <= speed_max")
        if not 0 < self.box_width_min <= self.box_width_max or not 0 < self.box_height_min <= self.box_height_max:
            raise ValueError("box size ranges must be positive and ordered")
        if self.pair_stride not in (1, 4):
            raise ValueError(f"pair_stride must be 1 or 4, got {self.pair_stride}")
        if self.kind not in ("random", "crossing"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.motion not in ("linear", "sinusoidal", "mixed"):
            raise ValueError(f"unknown motion law {self.motion!r}")

    @classmethod
    def from_mapping(cls, values: dict) -> "ScenarioConfig":
        kinds = {f.name: f.type for f in dataclasses.fields(cls)}
        kw = {}
        for key, raw in values.items():
            key = key.strip().replace("-", "_")
            if key not in kinds:
                raise KeyError(f"unknown scenario key {key!r}")
            default = getattr(cls, key)
            if isinstance(default, bool):
                kw[key] = str(raw).lower() in ("1", "true", "yes")
            elif isinstance(default, int):
                kw[key] = int(raw)
            elif isinstance(default, float):
                kw[key] = float(raw)
            else:
                kw[key] = str(raw).strip()
        return cls(**kw)


def parse_kv(text: str) -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _fold(x, lo, hi):
    """Reflect ``x`` into ``[lo, hi]`` as if bouncing off both walls."""
    span = hi - lo
    if span <= 0:
        return np.full_like(x, lo)
    y = np.mod(x - lo, 2.0 * span)
    y = np.where(y > span, 2.0 * span - y, y)
    return lo + y


@dataclass
class _Agent:
    identity: int
    birth: int
    width: float
    height: float
    cx0: float
    cy0: float
    vx: float
    vy: float
    amplitude: float = 0.0
    period: float = 1.0
    phase: float = 0.0
    death: Optional[int] = None
    path: Optional[np.ndarray] = None

    def trace(self, last_frame: int, W: int, H: int) -> np.ndarray:
        """Rounded ``(left, top)`` for frames ``birth..last_frame``."""
        t = np.arange(last_frame - self.birth + 1, dtype=np.float64)
        cx = self.cx0 + self.vx * t
        cy = self.cy0 + self.vy * t
        if self.amplitude:
            speed = math.hypot(self.vx, self.vy) or 1.0
            wave = self.amplitude * np.sin(2.0 * math.pi * t / self.period + self.phase)
            cx = cx - self.vy / speed * wave
            cy = cy + self.vx / speed * wave
        cx = _fold(cx, self.width / 2.0, W - self.width / 2.0)
        cy = _fold(cy, self.height / 2.0, H - self.height / 2.0)
        self.path = np.round(np.stack([cx - self.width / 2.0, cy - self.height / 2.0], axis=1), 2)
        return self.path

    def box(self, frame: int) -> BBox:
        left, top = self.path[frame - self.birth]
        return BBox(float(left), float(top), self.width, self.height)

    def boxes(self) -> np.ndarray:
        n = self.path.shape[0]
        return np.column_stack([self.path, np.full(n, self.width), np.full(n, self.height)])


def _max_overlap(a: _Agent, others: list[_Agent]) -> float:
    """Largest IOU between ``a`` and any of ``others`` over frames they share."""
    worst = 0.0
    ab = a.boxes()
    for o in others:
        ob = o.boxes()
        lo = max(a.birth, o.birth)
        hi = min(a.birth + len(ab), o.birth + len(ob))
        if lo >= hi:
            continue
        x = ab[lo - a.birth:hi - a.birth]
        y = ob[lo - o.birth:hi - o.birth]
        iw = np.minimum(x[:, 0] + x[:, 2], y[:, 0] + y[:, 2]) - np.maximum(x[:, 0], y[:, 0])
        ih = np.minimum(x[:, 1] + x[:, 3], y[:, 1] + y[:, 3]) - np.maximum(x[:, 1], y[:, 1])
        inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
        ious = inter / (x[:, 2] * x[:, 3] + y[:, 2] * y[:, 3] - inter)
        worst = max(worst, float(ious.max()))
    return worst


@dataclass
class Scenario:
    config: ScenarioConfig
    ground_truth: dict[int, list[GroundTruthEntry]]
    detections: dict[int, list[Detection]]
    detection_identities: dict[int, list[int]]
    codes: dict[int, np.ndarray]
    _field_cache: dict = field(default_factory=dict, repr=False)

    @property
    def frames(self) -> range:
        return range(1, self.config.frame_count + 1)

    def gt_boxes(self, frame: int) -> dict[int, BBox]:
        return {e.identity: e.box for e in self.ground_truth.get(frame, [])}

    def frame_pairs(self, stride: Optional[int] = None) -> list[tuple[int, int]]:
        s = self.config.pair_stride if stride is None else stride
        return [(i, i + s) for i in range(1, self.config.frame_count + 1 - s)]

    def field(self, former: int, latter: Optional[int] = None) -> LayeredMotionField:
        latter = former + 1 if latter is None else latter
        key = (former, latter)
        hit = self._field_cache.get(key)
        if hit is not None:
            return hit
        cfg = self.config
        b1, b2 = self.gt_boxes(former), self.gt_boxes(latter)
        matches = [BoxMatch(b1[i], b2[i], i) for i in sorted(b1) if i in b2]
        f = LayeredMotionField(matches, cfg.width, cfg.height, np.float32,
                               cfg.field_noise, (cfg.seed, 1, former, latter))
        if len(self._field_cache) > 4:
            self._field_cache.pop(next(iter(self._field_cache)))
        self._field_cache[key] = f
        return f

    def feature_map(self, frame: int) -> LayeredFeatureMap:
        cfg = self.config
        entries = sorted(self.ground_truth.get(frame, []), key=lambda e: (-e.box.area, -e.identity))
        layers = tuple(
            PaintLayer(e.box, self.codes[e.identity], cfg.appearance_noise, (cfg.seed, 2, frame, e.identity))
            for e in entries
        )
        return LayeredFeatureMap(cfg.width, cfg.height, cfg.channels, layers)

    def bundle(self, frame: int, detections: Optional[list[Detection]] = None) -> FrameBundle:
        """Inputs associating ``frame - 1`` with ``frame``."""
        dets = self.detections.get(frame, []) if detections is None else detections
        return FrameBundle(frame, dets, self.field(frame - 1, frame),
                           self.feature_map(frame - 1), self.feature_map(frame))

    def bundles(self) -> Iterator[FrameBundle]:
        for f in range(2, self.config.frame_count + 1):
            yield self.bundle(f)

    @property
    def initial_detections(self) -> list[Detection]:
        return self.detections.get(1, [])

    def sequence_info(self, name: str = "SIM") -> SequenceInfo:
        cfg = self.config
        return SequenceInfo(name, cfg.frame_count, cfg.width, cfg.height, 30.0)


def _identity_codes(rng: np.random.Generator, n: int, channels: int) -> list[np.ndarray]:
    codes: list[np.ndarray] = []
    for _ in range(n):
        for _attempt in range(10_000):
            v = rng.normal(size=channels)
            v /= np.linalg.norm(v)
            if all(float(v @ c) <= CODE_COSINE_LIMIT for c in codes):
                break
        else:
            raise ValueError(f"could not draw {n} identity codes in {channels} channels with cosine <= {CODE_COSINE_LIMIT}")
        codes.append(v)
    return codes


def _random_agent(rng, cfg: ScenarioConfig, identity: int, birth: int, motion: str) -> _Agent:
    w = round(float(rng.uniform(cfg.box_width_min, cfg.box_width_max)), 2)
    h = round(float(rng.uniform(cfg.box_height_min, cfg.box_height_max)), 2)
    if w >= cfg.width or h >= cfg.height:
        raise ValueError(f"agent box {w}x{h} does not fit in the {cfg.width}x{cfg.height} frame")
    cx = float(rng.uniform(w / 2.0, cfg.width - w / 2.0))
    cy = float(rng.uniform(h / 2.0, cfg.height - h / 2.0))
    speed = float(rng.uniform(cfg.speed_min, cfg.speed_max))
    angle = float(rng.uniform(0.0, 2.0 * math.pi))
    wavy = motion == "sinusoidal" or (motion == "mixed" and rng.random() < 0.5)
    phase = float(rng.uniform(0.0, 2.0 * math.pi))
    return _Agent(identity, birth, w, h, cx, cy, speed * math.cos(angle), speed * math.sin(angle),
                  cfg.amplitude if wavy else 0.0, cfg.period, phase)


MAX_PLACEMENT_ATTEMPTS = 2000


def _place_agent(rng, cfg: ScenarioConfig, identity: int, birth: int, others: list[_Agent]) -> _Agent:
    """Draw an agent whose path keeps IOU with ``others`` at or below ``max_overlap``."""
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        a = _random_agent(rng, cfg, identity, birth, cfg.motion)
        a.trace(cfg.frame_count, cfg.width, cfg.height)
        if cfg.max_overlap >= 1.0 or _max_overlap(a, others) <= cfg.max_overlap:
            return a
    raise ValueError(
        f"could not place agent {identity} with max_overlap={cfg.max_overlap} "
        f"after {MAX_PLACEMENT_ATTEMPTS} attempts; lower the agent count or raise the cap"
    )


def _crossing_agents(rng, cfg: ScenarioConfig) -> list[_Agent]:
    """Pairs of equal-size agents on shared rows, walking toward each other."""
    agents = []
    pairs = max(cfg.agent_count // 2, 1)
    T = max(cfg.frame_count - 1, 1)
    next_id = 1
    for k in range(pairs):
        w = round(float(rng.uniform(cfg.box_width_min, cfg.box_width_max)), 2)
        h = round(float(rng.uniform(cfg.box_height_min, cfg.box_height_max)), 2)
        if w >= cfg.width or h >= cfg.height:
            raise ValueError(f"agent box {w}x{h} does not fit in the {cfg.width}x{cfg.height} frame")
        row = cfg.height * (k + 1) / (pairs + 1)
        speed = float(rng.uniform(cfg.speed_min, cfg.speed_max))
        reach = (cfg.width - w) / 2.0 - 1.0
        speed = min(speed, 2.0 * reach / T)
        xc = cfg.width / 2.0 + float(rng.uniform(-0.1, 0.1)) * w
        half = speed * T / 2.0
        dy = float(rng.uniform(-0.1, 0.1)) * h
        agents.append(_Agent(next_id, 1, w, h, xc - half, row, speed, 0.0))
        agents.append(_Agent(next_id + 1, 1, w, h, xc + half, row + dy, -speed, 0.0))
        next_id += 2
    return agents[: max(cfg.agent_count, 2)]


def generate(cfg: ScenarioConfig) -> Scenario:
    rng = np.random.default_rng(cfg.seed)
    W, H = cfg.width, cfg.height
    if cfg.kind == "crossing":
        agents = _crossing_agents(rng, cfg)
        for a in agents:
            a.trace(cfg.frame_count, W, H)
    else:
        agents = []
        for i in range(cfg.agent_count):
            agents.append(_place_agent(rng, cfg, i + 1, 1, agents))
    next_id = len(agents) + 1

    gt: dict[int, list[GroundTruthEntry]] = {}
    alive = list(agents)
    for f in range(1, cfg.frame_count + 1):
        if f > 1:
            if cfg.exit_prob > 0:
                for a in alive:
                    if rng.random() < cfg.exit_prob:
                        a.death = f
                alive = [a for a in alive if a.death is None]
            if cfg.entry_prob > 0 and rng.random() < cfg.entry_prob:
                a = _place_agent(rng, cfg, next_id, f, alive)
                next_id += 1
                agents.append(a)
                alive.append(a)
        gt[f] = [GroundTruthEntry(a.identity, a.box(f)) for a in sorted(alive, key=lambda a: a.identity)]

    codes = dict(zip((a.identity for a in agents), _identity_codes(rng, len(agents), cfg.channels)))

    dets: dict[int, list[Detection]] = {}
    det_ids: dict[int, list[int]] = {}
    for f in range(1, cfg.frame_count + 1):
        rows: list[tuple[int, BBox, float]] = []
        for e in gt[f]:
            if cfg.miss_prob > 0 and rng.random() < cfg.miss_prob:
                continue
            b = e.box
            if cfg.center_jitter > 0 or cfg.size_jitter > 0:
                cx, cy = b.center
                cx = min(max(cx + rng.normal(0.0, cfg.center_jitter), 0.0), W)
                cy = min(max(cy + rng.normal(0.0, cfg.center_jitter), 0.0), H)
                w = max(b.width + rng.normal(0.0, cfg.size_jitter), 1.0)
                h = max(b.height + rng.normal(0.0, cfg.size_jitter), 1.0)
                b = BBox(round(cx - w / 2.0, 2), round(cy - h / 2.0, 2), round(w, 2), round(h, 2))
            rows.append((e.identity, b, TRUE_CONFIDENCE))
        n_fp = int(rng.poisson(cfg.fp_rate)) if cfg.fp_rate > 0 else 0
        for _ in range(n_fp):
            w = round(float(rng.uniform(cfg.box_width_min, cfg.box_width_max)), 2)
            h = round(float(rng.uniform(cfg.box_height_min, cfg.box_height_max)), 2)
            left = round(float(rng.uniform(0.0, max(W - w, 0.0))), 2)
            top = round(float(rng.uniform(0.0, max(H - h, 0.0))), 2)
            rows.append((0, BBox(left, top, w, h), FALSE_CONFIDENCE))
        if cfg.center_jitter > 0 or cfg.fp_rate > 0:
            rows = [rows[k] for k in rng.permutation(len(rows))]
        dets[f] = [Detection(f, b, c) for _, b, c in rows]
        det_ids[f] = [i for i, _, _ in rows]

    return Scenario(cfg, gt, dets, det_ids, codes)


def field_filename(former: int, latter: int) -> str:
    return f"fmf_{former:06d}_{latter:06d}.bin"


def fmap_filename(frame: int) -> str:
    return f"faf_{frame:06d}.bin"


def export(scenario: Scenario, directory, name: str = "SIM", feature_maps: bool = True) -> list[Path]:
    """Write the scenario in MOTChallenge layout plus binary field and map files."""
    root = Path(directory)
    for sub in ("gt", "det", "fmf", "faf"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    written = []

    def put(path: Path, data):
        mode = "wb" if isinstance(data, bytes) else "w"
        with open(path, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": "\n"})) as fh:
            fh.write(data)
        written.append(path)

    put(root / "seqinfo.ini", write_seqinfo(scenario.sequence_info(name)))
    put(root / "gt" / "gt.txt", write_ground_truth(scenario.ground_truth))
    put(root / "det" / "det.txt", write_detections(scenario.detections))
    for i, j in scenario.frame_pairs():
        put(root / "fmf" / field_filename(i, j), write_field(scenario.field(i, j).to_dense()))
    if feature_maps:
        for f in scenario.frames:
            put(root / "faf" / fmap_filename(f), write_fmap(scenario.feature_map(f)))
    return written
