"""MOTChallenge text formats, sequence metadata and binary field/feature codecs."""
from __future__ import annotations

import configparser
import io
import logging
import struct
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .faf import FeatureMap
from .fmf import MotionField
from .geometry import BBox
from .tracker import Detection, Track

log = logging.getLogger(__name__)


class MOTFormatError(ValueError):
    def __init__(self, lineno: int, line: str, reason: str):
        super().__init__(f"line {lineno}: {reason}: {line!r}")
        self.lineno = lineno
        self.line = line


class FrameTable(dict):
    """``frame_index -> list`` mapping that also records skipped lines."""

    def __init__(self, *args, skipped: int = 0, **kwargs):
        super().__init__(*args, **kwargs)
        self.skipped = skipped


@dataclass(frozen=True)
class GroundTruthEntry:
    identity: int
    box: BBox
    visibility: float = 1.0


@dataclass(frozen=True)
class SequenceInfo:
    name: str
    frame_count: int
    image_width: int
    image_height: int
    frame_rate: float

    def __post_init__(self):
        for key in ("frame_count", "image_width", "image_height", "frame_rate"):
            if getattr(self, key) <= 0:
                raise ValueError(f"{key} must be positive, got {getattr(self, key)}")


def _text(stream) -> Iterable[str]:
    if isinstance(stream, str):
        return io.StringIO(stream)
    return stream


def _rows(stream, min_fields: int):
    for lineno, raw in enumerate(_text(stream), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) < min_fields:
            raise MOTFormatError(lineno, line, f"expected at least {min_fields} fields, got {len(parts)}")
        try:
            frame = int(parts[0])
            ident = int(float(parts[1]))
            left, top, w, h = (float(p) for p in parts[2:6])
            extra = [float(p) for p in parts[6:]]
        except ValueError as exc:
            raise MOTFormatError(lineno, line, f"malformed field ({exc})") from None
        if frame < 1:
            raise MOTFormatError(lineno, line, "frame index must be >= 1")
        yield lineno, line, frame, ident, (left, top, w, h), extra


def parse_detections(stream: TextIO | str) -> FrameTable:
    """Parse ``frame,id,left,top,width,height,conf,...`` lines into detections."""
    out = FrameTable()
    for lineno, line, frame, _ident, (l, t, w, h), extra in _rows(stream, 7):
        if w <= 0 or h <= 0:
            out.skipped += 1
            continue
        try:
            box = BBox(l, t, w, h)
        except ValueError as exc:
            raise MOTFormatError(lineno, line, str(exc)) from None
        out.setdefault(frame, []).append(Detection(frame, box, extra[0]))
    if out.skipped:
        log.warning("skipped %d detection lines with non-positive size", out.skipped)
    return out


def parse_ground_truth(stream: TextIO | str) -> FrameTable:
    """Parse ground-truth lines; entries whose consider flag is 0 are dropped."""
    out = FrameTable()
    seen = set()
    for lineno, line, frame, ident, (l, t, w, h), extra in _rows(stream, 7):
        if ident <= 0:
            raise MOTFormatError(lineno, line, "identity must be positive")
        if (frame, ident) in seen:
            raise MOTFormatError(lineno, line, f"duplicate identity {ident} in frame {frame}")
        seen.add((frame, ident))
        if extra[0] == 0:
            continue
        if w <= 0 or h <= 0:
            out.skipped += 1
            continue
        try:
            box = BBox(l, t, w, h)
        except ValueError as exc:
            raise MOTFormatError(lineno, line, str(exc)) from None
        vis = extra[2] if len(extra) >= 3 else 1.0
        out.setdefault(frame, []).append(GroundTruthEntry(ident, box, vis))
    if out.skipped:
        log.warning("skipped %d ground-truth lines with non-positive size", out.skipped)
    return out


def _fmt(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def write_results(tracks: Iterable[Track]) -> str:
    rows = sorted((f, t.id, b) for t in tracks for f, b in t.entries)
    return "".join(
        f"{f},{i},{_fmt(b.left)},{_fmt(b.top)},{_fmt(b.width)},{_fmt(b.height)},1,-1,-1,-1\n"
        for f, i, b in rows
    )


def write_detections(frames: dict) -> str:
    lines = []
    for f in sorted(frames):
        for d in frames[f]:
            b = d.box
            lines.append(f"{f},-1,{_fmt(b.left)},{_fmt(b.top)},{_fmt(b.width)},{_fmt(b.height)},"
                         f"{_fmt(d.confidence)},-1,-1,-1\n")
    return "".join(lines)


def write_ground_truth(frames: dict) -> str:
    rows = sorted((f, e.identity, e) for f, entries in frames.items() for e in entries)
    return "".join(
        f"{f},{i},{_fmt(e.box.left)},{_fmt(e.box.top)},{_fmt(e.box.width)},{_fmt(e.box.height)},"
        f"1,1,{_fmt(e.visibility)}\n"
        for f, i, e in rows
    )


def tracks_from_table(table: dict) -> list[Track]:
    """Rebuild tracks from a parsed ``frame -> [GroundTruthEntry]`` table."""
    by_id: dict[int, list] = {}
    for f in sorted(table):
        for e in table[f]:
            by_id.setdefault(e.identity, []).append((f, e.box))
    return [Track(i, entries, "terminated") for i, entries in sorted(by_id.items())]


def parse_seqinfo(stream: TextIO | str) -> SequenceInfo:
    cp = configparser.ConfigParser(interpolation=None, strict=False)
    text = stream if isinstance(stream, str) else stream.read()
    if not text.lstrip().startswith("["):
        text = "[Sequence]\n" + text
    cp.read_string(text)
    values = {}
    for section in cp.sections():
        values.update(cp[section])
    keys = {"name": str, "seqlength": int, "imwidth": int, "imheight": int, "framerate": float}
    parsed = {}
    for key, conv in keys.items():
        if key not in values:
            pretty = {"seqlength": "seqLength", "imwidth": "imWidth", "imheight": "imHeight",
                      "framerate": "frameRate"}.get(key, key)
            raise KeyError(f"seqinfo is missing required key {pretty!r}")
        try:
            parsed[key] = conv(values[key])
        except ValueError:
            raise ValueError(f"seqinfo key {key!r} has invalid value {values[key]!r}") from None
    return SequenceInfo(parsed["name"], parsed["seqlength"], parsed["imwidth"], parsed["imheight"],
                        parsed["framerate"])


def write_seqinfo(info: SequenceInfo) -> str:
    rate = int(info.frame_rate) if float(info.frame_rate).is_integer() else info.frame_rate
    return (
        "[Sequence]\n"
        f"name={info.name}\n"
        "imDir=img1\n"
        f"frameRate={rate}\n"
        f"seqLength={info.frame_count}\n"
        f"imWidth={info.image_width}\n"
        f"imHeight={info.image_height}\n"
        "imExt=.jpg\n"
    )


# ---------------------------------------------------------------------------
# binary codecs
# ---------------------------------------------------------------------------

FIELD_MAGIC = b"FMF1"
FMAP_MAGIC = b"FAF1"
MAX_PAYLOAD_BYTES = 1 << 34


class CodecError(ValueError):
    pass


class BadMagicError(CodecError):
    pass


class TruncatedPayloadError(CodecError):
    pass


class DimensionOverflowError(CodecError):
    pass


class TrailingDataError(CodecError):
    pass


def field_payload_size(width: int, height: int) -> int:
    n = width * height
    return 4 + 8 + 4 * 4 * n + 2 * ((n + 7) // 8)


def fmap_payload_size(width: int, height: int, channels: int) -> int:
    return 4 + 12 + 4 * width * height * channels


def write_field(f: MotionField) -> bytes:
    """Serialize a field; float64 channels are stored as float32."""
    parts = [FIELD_MAGIC, struct.pack("<II", f.width, f.height),
             np.ascontiguousarray(f.values, dtype="<f4").tobytes()]
    for k in range(2):
        parts.append(np.packbits(f.occupancy[k].ravel()).tobytes())
    return b"".join(parts)


def _check_header(data: bytes, magic: bytes, header_len: int, kind: str) -> None:
    if len(data) < 4:
        raise TruncatedPayloadError(f"{kind} payload shorter than its magic ({len(data)} bytes)")
    if data[:4] != magic:
        raise BadMagicError(f"bad {kind} magic {data[:4]!r}, expected {magic!r}")
    if len(data) < header_len:
        raise TruncatedPayloadError(f"{kind} header truncated at {len(data)} bytes")


def _check_size(data: bytes, expected: int, kind: str) -> None:
    if expected > MAX_PAYLOAD_BYTES:
        raise DimensionOverflowError(f"{kind} dimensions imply {expected} bytes, above the {MAX_PAYLOAD_BYTES} limit")
    if len(data) < expected:
        raise TruncatedPayloadError(f"{kind} payload has {len(data)} bytes, expected {expected}")
    if len(data) > expected:
        raise TrailingDataError(f"{kind} payload has {len(data) - expected} trailing bytes")


def read_field(data: bytes) -> MotionField:
    _check_header(data, FIELD_MAGIC, 12, "field")
    width, height = struct.unpack_from("<II", data, 4)
    if width == 0 or height == 0:
        raise DimensionOverflowError(f"field dimensions must be positive, got {width}x{height}")
    _check_size(data, field_payload_size(width, height), "field")
    n = width * height
    values = np.frombuffer(data, dtype="<f4", count=4 * n, offset=12).astype(np.float32).reshape(4, height, width)
    off = 12 + 16 * n
    nbytes = (n + 7) // 8
    masks = []
    for _ in range(2):
        bits = np.frombuffer(data, dtype=np.uint8, count=nbytes, offset=off)
        masks.append(np.unpackbits(bits, count=n).astype(bool).reshape(height, width))
        off += nbytes
    return MotionField(values, np.stack(masks))


def write_fmap(fmap) -> bytes:
    dense = fmap.to_dense()
    c, h, w = dense.values.shape
    return FMAP_MAGIC + struct.pack("<III", w, h, c) + np.ascontiguousarray(dense.values, dtype="<f4").tobytes()


def read_fmap(data: bytes) -> FeatureMap:
    _check_header(data, FMAP_MAGIC, 16, "feature map")
    width, height, channels = struct.unpack_from("<III", data, 4)
    if width == 0 or height == 0 or channels == 0:
        raise DimensionOverflowError(f"feature map dimensions must be positive, got {width}x{height}x{channels}")
    _check_size(data, fmap_payload_size(width, height, channels), "feature map")
    values = np.frombuffer(data, dtype="<f4", offset=16).astype(np.float32).reshape(channels, height, width)
    return FeatureMap(values)


# ---------------------------------------------------------------------------
# sequence directories
# ---------------------------------------------------------------------------

class SequenceDirectory:
    """A sequence on disk: ``seqinfo.ini``, ``gt/gt.txt``, ``det/det.txt``, ``fmf/``, ``faf/``."""

    def __init__(self, root):
        from pathlib import Path

        self.root = Path(root)
        if not self.root.is_dir():
            raise FileNotFoundError(f"sequence directory not found: {self.root}")
        info_path = self.root / "seqinfo.ini"
        if not info_path.is_file():
            raise FileNotFoundError(f"missing sequence metadata: {info_path}")
        self.info = parse_seqinfo(info_path.read_text(encoding="utf-8"))

    def _read_text(self, *parts) -> str:
        path = self.root.joinpath(*parts)
        if not path.is_file():
            raise FileNotFoundError(f"missing file: {path}")
        return path.read_text(encoding="utf-8")

    def detections(self) -> FrameTable:
        return parse_detections(self._read_text("det", "det.txt"))

    def ground_truth(self) -> FrameTable:
        return parse_ground_truth(self._read_text("gt", "gt.txt"))

    def _check_dims(self, obj, path) -> None:
        if (obj.width, obj.height) != (self.info.image_width, self.info.image_height):
            raise ValueError(
                f"{path}: grid {obj.width}x{obj.height} does not match sequence size "
                f"{self.info.image_width}x{self.info.image_height}"
            )

    def field(self, former: int, latter: int) -> MotionField:
        path = self.root / "fmf" / f"fmf_{former:06d}_{latter:06d}.bin"
        if not path.is_file():
            raise FileNotFoundError(f"missing motion field: {path}")
        f = read_field(path.read_bytes())
        self._check_dims(f, path)
        return f

    def feature_map(self, frame: int) -> FeatureMap:
        path = self.root / "faf" / f"faf_{frame:06d}.bin"
        if not path.is_file():
            raise FileNotFoundError(f"missing feature map: {path}")
        m = read_fmap(path.read_bytes())
        self._check_dims(m, path)
        return m
