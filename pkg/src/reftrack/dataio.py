"""On-disk sequence layout, MOT-format ground truth, and a synthetic generator.

A sequence directory looks like:

    <root>/visible/000001.jpg    paired frame lists, 6-digit 1-based numbering
    <root>/infrared/000001.jpg
    <root>/gt.txt                MOT lines: frame,id,x,y,w,h,conf,class,visibility
    <root>/expressions.json      language descriptions -> target ids + frame ranges
    <root>/seqinfo.json          {name, width, height, frame_count}

Pixel data is never decoded here — frame paths are opaque references handed
to perception backends. The synthetic generator writes constant-velocity
wall-bouncing targets with exact ground truth; its placeholder frames
contain just their frame stem so files are content-distinct (replay servers
key on content).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AlignmentViolation, IoError, ParseError, SequenceLoad
from .geometry import BBox, ImageDims

FRAME_DIGITS = 6
RGB_DIR = "visible"
THERMAL_DIR = "infrared"
GT_FILE = "gt.txt"
EXPR_FILE = "expressions.json"
INFO_FILE = "seqinfo.json"


def frame_stem(frame: int) -> str:
    return f"{frame:0{FRAME_DIGITS}d}"


@dataclass
class TrackingResult:
    """Per-frame (identity, box) sets for one sequence, for predictions or ground truth."""

    name: str
    dims: ImageDims
    frame_count: int
    frames: dict[int, list[tuple[int, BBox]]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def add(self, frame: int, track_id: int, box: BBox) -> None:
        if not 1 <= frame <= self.frame_count:
            raise ValueError(f"frame {frame} outside 1..{self.frame_count}")
        entries = self.frames.setdefault(frame, [])
        if any(tid == track_id for tid, _ in entries):
            raise ValueError(f"duplicate id {track_id} in frame {frame}")
        entries.append((track_id, box))

    def at(self, frame: int) -> list[tuple[int, BBox]]:
        return self.frames.get(frame, [])

    def identities(self) -> set[int]:
        return {tid for entries in self.frames.values() for tid, _ in entries}

    def total_boxes(self) -> int:
        return sum(len(v) for v in self.frames.values())


@dataclass(frozen=True)
class SequenceManifest:
    name: str
    root: Path
    rgb_frames: tuple[Path, ...]
    thermal_frames: tuple[Path, ...]
    dims: ImageDims
    frame_count: int

    def frame_pair(self, frame: int) -> tuple[Path, Path]:
        return self.rgb_frames[frame - 1], self.thermal_frames[frame - 1]


@dataclass(frozen=True)
class TargetSpan:
    target_id: int
    ranges: tuple[tuple[int, int], ...]  # inclusive [start, end], sorted, non-overlapping

    def active(self, frame: int) -> bool:
        return any(lo <= frame <= hi for lo, hi in self.ranges)


@dataclass(frozen=True)
class ExpressionAnnotation:
    expression: str
    targets: tuple[TargetSpan, ...]

    def active_ids(self, frame: int) -> set[int]:
        return {t.target_id for t in self.targets if t.active(frame)}


@dataclass(frozen=True)
class SynthConfig:
    n_targets: int = 3
    n_frames: int = 100
    dims: ImageDims = ImageDims(512, 512)
    velocity_range: tuple[float, float] = (1.0, 4.0)   # px/frame per axis
    size_range: tuple[float, float] = (20.0, 60.0)     # px per side
    seed: int = 0

    def __post_init__(self):
        if self.n_targets < 1 or self.n_frames < 1:
            raise ValueError("n_targets and n_frames must be >= 1")
        if self.size_range[1] >= min(self.dims.width, self.dims.height):
            raise ValueError("targets must fit within the image at spawn")


def _parse_mot_line(line: str, lineno: int) -> tuple[int, int, BBox, float]:
    parts = [p.strip() for p in line.split(",")]
    if len(parts) < 6:
        raise ParseError(f"expected at least 6 comma-separated fields, got {len(parts)}", lineno)
    try:
        frame = int(float(parts[0]))
        tid = int(float(parts[1]))
        x, y, w, h = (float(v) for v in parts[2:6])
        conf = float(parts[6]) if len(parts) > 6 else 1.0
    except ValueError as exc:
        raise ParseError(f"malformed numeric field ({exc})", lineno) from None
    if frame < 1 or tid < 1:
        raise ParseError(f"frame and id must be 1-based positive integers, got {frame},{tid}", lineno)
    if w < 0 or h < 0:
        raise ParseError(f"negative box size {w}x{h}", lineno)
    return frame, tid, BBox.from_xywh(x, y, w, h), conf


def load_mot(path: Path, name: str, dims: ImageDims, frame_count: int) -> TrackingResult:
    """Parse one MOT text file; trailing fields beyond visibility are tolerated."""
    result = TrackingResult(name=name, dims=dims, frame_count=frame_count)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SequenceLoad(f"cannot read {path}: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        frame, tid, box, _conf = _parse_mot_line(line, lineno)
        if frame > frame_count:
            raise ParseError(f"frame {frame} exceeds sequence length {frame_count}", lineno)
        try:
            result.add(frame, tid, box)
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    return result


def write_results(result: TrackingResult, path: Path) -> None:
    """MOT convention `frame,id,x,y,w,h,1.0,-1,-1,-1`, coordinates to two decimals."""
    lines = []
    for frame in sorted(result.frames):
        for tid, box in sorted(result.frames[frame]):
            x, y, w, h = box.to_xywh()
            lines.append(f"{frame},{tid},{x:.2f},{y:.2f},{w:.2f},{h:.2f},1.0,-1,-1,-1")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(line + "\n" for line in lines))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None


def load_results(path: Path, name: str, dims: ImageDims, frame_count: int) -> TrackingResult:
    return load_mot(path, name, dims, frame_count)


def _load_expressions(path: Path, frame_count: int) -> list[ExpressionAnnotation]:
    try:
        payload = json.loads(Path(path).read_text())
    except OSError as exc:
        raise SequenceLoad(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid expressions file {path}: {exc}") from None
    out = []
    for idx, entry in enumerate(payload.get("expressions", []), start=1):
        targets = []
        for t in entry.get("targets", []):
            ranges = tuple(tuple(int(v) for v in r) for r in t.get("ranges", []))
            for lo, hi in ranges:
                if not (1 <= lo <= hi <= frame_count):
                    raise ParseError(
                        f"expression {idx}: range [{lo},{hi}] outside 1..{frame_count}")
            for (a_lo, a_hi), (b_lo, b_hi) in zip(ranges, ranges[1:]):
                if b_lo <= a_hi:
                    raise ParseError(f"expression {idx}: ranges overlap or are unsorted")
            targets.append(TargetSpan(int(t["id"]), ranges))
        out.append(ExpressionAnnotation(str(entry["expression"]), tuple(targets)))
    return out


def load_sequence(root: Path) -> tuple[SequenceManifest, TrackingResult, list[ExpressionAnnotation]]:
    """Load one sequence directory, validating inter-file invariants."""
    root = Path(root)
    if not root.is_dir():
        raise SequenceLoad(f"sequence root {root} is not a directory")
    info_path = root / INFO_FILE
    if not info_path.is_file():
        raise SequenceLoad(f"missing {INFO_FILE} in {root}")
    try:
        info = json.loads(info_path.read_text())
        dims = ImageDims(int(info["width"]), int(info["height"]))
        frame_count = int(info["frame_count"])
        name = str(info.get("name", root.name))
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise SequenceLoad(f"invalid {INFO_FILE} in {root}: {exc}") from None
    rgb_dir, thermal_dir = root / RGB_DIR, root / THERMAL_DIR
    if not rgb_dir.is_dir() or not thermal_dir.is_dir():
        raise SequenceLoad(f"missing {RGB_DIR}/ or {THERMAL_DIR}/ in {root}")
    rgb = tuple(sorted(p for p in rgb_dir.iterdir() if p.is_file()))
    thermal = tuple(sorted(p for p in thermal_dir.iterdir() if p.is_file()))
    if len(rgb) != len(thermal):
        raise AlignmentViolation(
            f"{root}: {len(rgb)} visible frames vs {len(thermal)} thermal frames")
    if len(rgb) != frame_count:
        raise SequenceLoad(f"{root}: {len(rgb)} frames on disk but {INFO_FILE} says {frame_count}")
    gt_path = root / GT_FILE
    if not gt_path.is_file():
        raise SequenceLoad(f"missing {GT_FILE} in {root}")
    gt = load_mot(gt_path, name, dims, frame_count)
    expr_path = root / EXPR_FILE
    if not expr_path.is_file():
        raise SequenceLoad(f"missing {EXPR_FILE} in {root}")
    expressions = _load_expressions(expr_path, frame_count)
    manifest = SequenceManifest(name, root, rgb, thermal, dims, frame_count)
    return manifest, gt, expressions


def restrict_to_expression(gt: TrackingResult, expr: ExpressionAnnotation) -> TrackingResult:
    """Ground truth narrowed to the expression's targets within their frame ranges."""
    out = TrackingResult(name=gt.name, dims=gt.dims, frame_count=gt.frame_count)
    for frame, entries in gt.frames.items():
        active = expr.active_ids(frame)
        for tid, box in entries:
            if tid in active:
                out.add(frame, tid, box)
    return out


def discover_sequences(root: Path) -> list[Path]:
    """`root` is a sequence dir itself, or a directory of sequence dirs."""
    root = Path(root)
    if (root / GT_FILE).is_file():
        return [root]
    if root.is_dir():
        found = sorted(p for p in root.iterdir() if (p / GT_FILE).is_file())
        if found:
            return found
    raise SequenceLoad(f"no sequences found under {root}")


def synth_generate(cfg: SynthConfig, out_root: Path) -> Path:
    """Write a synthetic sequence: bouncing constant-velocity targets, exact GT.

    Deterministic per seed. The auto expression "all moving targets" covers
    every id over the full sequence.
    """
    out_root = Path(out_root)
    rng = np.random.default_rng(cfg.seed)
    w_img, h_img = float(cfg.dims.width), float(cfg.dims.height)
    lo_s, hi_s = cfg.size_range
    lo_v, hi_v = cfg.velocity_range

    tracks: dict[int, list[tuple[int, BBox]]] = {}
    for tid in range(1, cfg.n_targets + 1):
        bw = float(rng.uniform(lo_s, hi_s))
        bh = float(rng.uniform(lo_s, hi_s))
        x = float(rng.uniform(0.0, w_img - bw))
        y = float(rng.uniform(0.0, h_img - bh))
        vx = float(rng.uniform(lo_v, hi_v)) * (1.0 if rng.random() < 0.5 else -1.0)
        vy = float(rng.uniform(lo_v, hi_v)) * (1.0 if rng.random() < 0.5 else -1.0)
        boxes = []
        for frame in range(1, cfg.n_frames + 1):
            boxes.append((frame, BBox.from_xywh(x, y, bw, bh)))
            x += vx
            y += vy
            if x < 0.0:
                x, vx = -x, -vx
            elif x > w_img - bw:
                x, vx = 2.0 * (w_img - bw) - x, -vx
            if y < 0.0:
                y, vy = -y, -vy
            elif y > h_img - bh:
                y, vy = 2.0 * (h_img - bh) - y, -vy
        tracks[tid] = boxes

    try:
        (out_root / RGB_DIR).mkdir(parents=True, exist_ok=True)
        (out_root / THERMAL_DIR).mkdir(parents=True, exist_ok=True)
        for frame in range(1, cfg.n_frames + 1):
            stem = frame_stem(frame)
            (out_root / RGB_DIR / f"{stem}.jpg").write_text(stem)
            (out_root / THERMAL_DIR / f"{stem}.jpg").write_text(stem)
        gt_lines = []
        for frame in range(1, cfg.n_frames + 1):
            for tid in sorted(tracks):
                box = tracks[tid][frame - 1][1]
                x, y, bw, bh = box.to_xywh()
                gt_lines.append(f"{frame},{tid},{x:.2f},{y:.2f},{bw:.2f},{bh:.2f},1,1,1.0")
        (out_root / GT_FILE).write_text("".join(line + "\n" for line in gt_lines))
        expressions = {
            "expressions": [
                {
                    "expression": "all moving targets",
                    "targets": [
                        {"id": tid, "ranges": [[1, cfg.n_frames]]} for tid in sorted(tracks)
                    ],
                }
            ]
        }
        (out_root / EXPR_FILE).write_text(json.dumps(expressions, indent=2) + "\n")
        info = {
            "name": out_root.name,
            "width": cfg.dims.width,
            "height": cfg.dims.height,
            "frame_count": cfg.n_frames,
        }
        (out_root / INFO_FILE).write_text(json.dumps(info, indent=2) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write synthetic sequence under {out_root}: {exc}") from None
    return out_root
