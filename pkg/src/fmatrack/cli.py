"""Command-line entry point: simulate, track, eval, bench, render."""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__
from . import bench as _bench
from .fmf import UndecodableBoxError, predict_box
from .metrics import evaluate
from .motchallenge import (
    CodecError,
    MOTFormatError,
    SequenceDirectory,
    parse_ground_truth,
    tracks_from_table,
    write_results,
)
from .overlay import BLUE, MAGENTA, YELLOW, Layer, rasterize, to_ppm, to_svg
from .simulator import ScenarioConfig, export, generate, parse_kv
from .tracker import FrameBundle, TrackerConfig, advance, initial_state

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def write_manifest(out: Path, command: str, config: dict, inputs: list, seed, timings: dict, **extra) -> Path:
    doc = {
        "command": command,
        "config": config,
        "inputs": [str(p) for p in inputs],
        "seed": seed,
        "timings": {k: round(v, 6) for k, v in timings.items()},
        "version": __version__,
    }
    doc.update(extra)
    path = manifest_path(out)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _read_kv_file(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"config file not found: {p}")
    try:
        return parse_kv(p.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise DataError(f"{p}: {exc}") from None


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# --- simulate -------------------------------------------------------------

def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    values = _read_kv_file(args.config) if args.config else {}
    if args.seed is not None:
        values["seed"] = str(args.seed)
    try:
        cfg = ScenarioConfig.from_mapping(values)
    except (KeyError, ValueError) as exc:
        raise DataError(f"{args.config or 'flags'}: invalid scenario config: {exc}") from None
    sc = generate(cfg)
    t1 = time.perf_counter()
    out = Path(args.out)
    export(sc, out, name=args.name, feature_maps=not args.no_feature_maps)
    t2 = time.perf_counter()
    cfg_dict = {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}
    write_manifest(out, "simulate", cfg_dict, [args.config] if args.config else [], cfg.seed,
                   {"generate": t1 - t0, "export": t2 - t1})
    print(f"wrote {cfg.frame_count} frames of {cfg.agent_count} agents to {out}")
    return EXIT_OK


# --- track ----------------------------------------------------------------

TRACK_DEFAULTS = {"mode": "fmf_faf", "tau1": 0.45, "tau2": 0.5, "aggregator": "median", "max_age": 1}


def tracker_config(args) -> TrackerConfig:
    values = dict(TRACK_DEFAULTS)
    if args.config:
        for k, v in _read_kv_file(args.config).items():
            k = k.replace("-", "_")
            if k not in values:
                raise DataError(f"{args.config}: unknown tracker key {k!r}")
            values[k] = v
    for k in TRACK_DEFAULTS:
        v = getattr(args, k)
        if v is not None:
            values[k] = v
    try:
        return TrackerConfig(tau1=float(values["tau1"]), tau2=float(values["tau2"]),
                             aggregator=str(values["aggregator"]), max_age=int(values["max_age"]),
                             mode=str(values["mode"]))
    except ValueError as exc:
        raise DataError(f"invalid tracker config: {exc}") from None


def cmd_track(args) -> int:
    cfg = tracker_config(args)
    seq = SequenceDirectory(args.seq)
    dets = seq.detections()
    n = seq.info.frame_count
    t_load = t_assoc = 0.0
    state = initial_state(dets.get(1, []), 1)
    for f in range(2, n + 1):
        t0 = time.perf_counter()
        field = seq.field(f - 1, f) if cfg.uses_motion else None
        prev = seq.feature_map(f - 1) if cfg.uses_appearance else None
        nxt = seq.feature_map(f) if cfg.uses_appearance else None
        bundle = FrameBundle(f, dets.get(f, []), field, prev, nxt)
        bundle.grid_size()
        t1 = time.perf_counter()
        advance(state, bundle, cfg)
        t_assoc += time.perf_counter() - t1
        t_load += t1 - t0
    out = Path(args.out)
    _write_text(out, write_results(state.tracks))
    hz = (n - 1) / t_assoc if t_assoc > 0 else float("inf")
    cfg_dict = {"mode": cfg.mode, "tau1": cfg.tau1, "tau2": cfg.tau2,
                "aggregator": cfg.aggregator, "max_age": cfg.max_age}
    write_manifest(out, "track", cfg_dict, [seq.root] + ([args.config] if args.config else []), None,
                   {"load": t_load, "associate": t_assoc}, hz=hz, frames=n, tracks=len(state.tracks))
    print(f"tracked {n} frames, {len(state.tracks)} tracks, {hz:.1f} Hz (association only)")
    return EXIT_OK


# --- eval -----------------------------------------------------------------

def _read_table(path: str, what: str):
    p = Path(path)
    if not p.is_file():
        raise DataError(f"{what} file not found: {p}")
    try:
        return parse_ground_truth(p.read_text(encoding="utf-8"))
    except MOTFormatError as exc:
        raise DataError(f"{p}: {exc}") from None


def _manifest_hz(hyp: Path):
    m = manifest_path(hyp)
    if m.is_file():
        try:
            return json.loads(m.read_text(encoding="utf-8")).get("hz")
        except json.JSONDecodeError:
            return None
    return None


def cmd_eval(args) -> int:
    t0 = time.perf_counter()
    gt = _read_table(args.gt, "ground-truth")
    hyp = _read_table(args.hyp, "hypothesis")
    hz = args.hz if args.hz is not None else _manifest_hz(Path(args.hyp))
    try:
        report = evaluate(gt, tracks_from_table(hyp), iou_threshold=args.iou, hz=hz)
    except ValueError as exc:
        raise DataError(f"{args.gt}: {exc}") from None
    out = Path(args.out)
    _write_text(out, report.to_csv())
    write_manifest(out, "eval", {"iou": args.iou}, [args.gt, args.hyp], None,
                   {"evaluate": time.perf_counter() - t0})
    sys.stdout.write(report.to_kv())
    return EXIT_OK


# --- bench ----------------------------------------------------------------

def _int_list(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 0:
        raise argparse.ArgumentTypeError("object counts must be non-negative")
    return vals


def cmd_bench(args) -> int:
    cfg = TrackerConfig(mode=args.mode)
    t0 = time.perf_counter()
    rows = _bench.run_benchmark(args.objects, frames=args.frames, seed=args.seed, cfg=cfg,
                                width=args.width, height=args.height)
    out = Path(args.out)
    _write_text(out, _bench.rows_to_csv(rows))
    write_manifest(out, "bench", {"objects": args.objects, "frames": args.frames, "mode": cfg.mode,
                                  "width": args.width, "height": args.height},
                   [], args.seed, {"total": time.perf_counter() - t0},
                   backend="numba" if _bench_backend() else "numpy")
    for r in rows:
        print(f"objects={r.objects} mean_ms={r.mean_ms:.3f} p95_ms={r.p95_ms:.3f} hz={r.hz:.1f}")
    return EXIT_OK


def _bench_backend() -> bool:
    from . import _kernels
    return _kernels.USING_NUMBA


# --- render ---------------------------------------------------------------

def overlay_layers(seq: SequenceDirectory, hyp_table, frame: int, aggregator: str = "median") -> list[Layer]:
    if frame < 2 or frame > seq.info.frame_count:
        raise DataError(f"--frame must lie in [2, {seq.info.frame_count}], got {frame}")
    dets = seq.detections()
    former = [d.box for d in dets.get(frame - 1, [])]
    latter = [d.box for d in dets.get(frame, [])]
    field = seq.field(frame - 1, frame)
    entries = sorted(hyp_table.get(frame - 1, []), key=lambda e: e.identity)
    predicted, ids = [], []
    for e in entries:
        try:
            predicted.append(predict_box(field, "forward", e.box, aggregator))
            ids.append(e.identity)
        except (UndecodableBoxError, ValueError):
            continue
    return [
        Layer(former, BLUE, "former"),
        Layer(latter, MAGENTA, "latter"),
        Layer(predicted, YELLOW, "predicted", ids),
    ]


def cmd_render(args) -> int:
    seq = SequenceDirectory(args.seq)
    hyp = _read_table(args.hyp, "hypothesis")
    layers = overlay_layers(seq, hyp, args.frame)
    out = Path(args.out)
    w, h = seq.info.image_width, seq.info.image_height
    fmt = args.format or ("ppm" if out.suffix.lower() == ".ppm" else "svg")
    out.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "ppm":
        out.write_bytes(to_ppm(rasterize(w, h, layers)))
    else:
        _write_text(out, to_svg(w, h, layers))
    write_manifest(out, "render", {"frame": args.frame, "format": fmt}, [seq.root, args.hyp], None, {})
    return EXIT_OK


# --- wiring ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fmatrack", description=__doc__)
    p.add_argument("--version", action="version", version=f"fmatrack {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate and export a synthetic sequence")
    s.add_argument("--config", help="key=value scenario file")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--name", default="SIM")
    s.add_argument("--no-feature-maps", action="store_true")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("track", help="track a sequence directory")
    t.add_argument("--seq", required=True)
    t.add_argument("--mode", choices=["fmf", "faf", "fmf_faf", "fma", "fmf_only", "faf_only"])
    t.add_argument("--tau1", type=float)
    t.add_argument("--tau2", type=float)
    t.add_argument("--aggregator", choices=["median", "mean"])
    t.add_argument("--max-age", dest="max_age", type=int)
    t.add_argument("--config", help="key=value tracker file; flags win")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_track)

    e = sub.add_parser("eval", help="CLEAR-MOT metrics of a result file")
    e.add_argument("--gt", required=True)
    e.add_argument("--hyp", required=True)
    e.add_argument("--iou", type=float, default=0.5)
    e.add_argument("--hz", type=float, help="throughput to report; defaults to the track manifest's value")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="per-frame association latency")
    b.add_argument("--objects", type=_int_list, default=[10, 25, 50, 100])
    b.add_argument("--frames", type=int, default=200)
    b.add_argument("--seed", type=int, default=7)
    b.add_argument("--mode", default="fmf_faf", choices=["fmf", "faf", "fmf_faf"])
    b.add_argument("--width", type=int, default=1280)
    b.add_argument("--height", type=int, default=720)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("render", help="overlay detections and predicted boxes")
    r.add_argument("--seq", required=True)
    r.add_argument("--hyp", required=True)
    r.add_argument("--frame", type=int, required=True)
    r.add_argument("--format", choices=["svg", "ppm"])
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (DataError, FileNotFoundError, MOTFormatError, CodecError, KeyError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"fmatrack {args.command}: {msg}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
