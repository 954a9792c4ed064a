"""Rule-based composite reward: structured-output scoring plus detection scoring.

A completion is scored along two weighted axes. The structured part checks
the <think>/<answer> tag discipline and applies a sine-window length reward
with a plateau of 1 between the low and high token marks. The detection
part Hungarian-matches the parsed boxes against ground truth (in ground
truth's coordinate space) and applies either the coverage-first score
(alpha * matched + beta * iou_sum) early in training or the redundancy-
penalized score (iou_sum / n_det**gamma + lambda * matched / n_gt) late.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import assignment, geometry
from .geometry import BBox, ImageDims

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_QUAD_RE = re.compile(r"\[\s*(" + _NUM + r")\s*,\s*(" + _NUM + r")\s*,\s*(" + _NUM + r")\s*,\s*(" + _NUM + r")\s*\]")
_SEP_RE = re.compile(r"[,\s]+")


@dataclass(frozen=True)
class ParsedAnswer:
    """Outcome of parsing one completion; parsing is total, failures live in the flags."""

    has_think: bool
    has_answer: bool
    answer_text: str
    boxes: tuple[BBox, ...]
    answer_is_pure: bool
    dropped_boxes: int = 0   # syntactic quadruples discarded for inverted corners


@dataclass(frozen=True)
class RewardConfig:
    """All reward hyperparameters; defaults follow the published RL configuration."""

    alpha: float = 0.5          # coverage weight on matched count
    beta: float = 1.0           # weight on summed matched IoU
    gamma: float = 0.5          # redundancy exponent on n_det
    lam: float = 2.0            # coverage weight in the precision score
    l_min: int = 80
    l_low: int = 140
    l_high: int = 200
    l_max: int = 600
    w_format: float = 0.5
    w_length: float = 0.5
    w_str: float = 1.0
    w_ctr: float = 1.0
    tau_match: float = 0.5      # minimum IoU for a valid match
    phase_switch: float = 0.5   # training fraction where coverage score hands over to precision

    def __post_init__(self):
        if not (self.l_min < self.l_low <= self.l_high < self.l_max):
            raise ValueError("length window must satisfy l_min < l_low <= l_high < l_max")
        for name in ("alpha", "beta", "gamma", "lam", "w_format", "w_length", "w_str", "w_ctr"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 <= self.tau_match <= 1.0:
            raise ValueError("tau_match must be in [0, 1]")
        if not 0.0 <= self.phase_switch <= 1.0:
            raise ValueError("phase_switch must be in [0, 1]")


@dataclass(frozen=True)
class MatchSummary:
    matched_gt: int
    iou_score: float
    n_det: int
    n_gt: int


def _single_block(text: str, open_tag: str, close_tag: str) -> tuple[bool, str, int, int]:
    """(found-exactly-one-pair, inner text, open pos, close pos)."""
    if text.count(open_tag) != 1 or text.count(close_tag) != 1:
        return False, "", -1, -1
    lo = text.index(open_tag)
    hi = text.index(close_tag)
    if hi < lo:
        return False, "", -1, -1
    return True, text[lo + len(open_tag):hi], lo, hi


def parse_answer(completion: str) -> ParsedAnswer:
    """Extract tag flags and coordinate quadruples from a raw completion.

    has_think requires exactly one <think></think> pair that precedes the
    answer block when one exists; has_answer requires exactly one
    <answer></answer> pair. Quadruples with inverted corners are dropped and
    tallied. The answer is "pure" when nothing but coordinate sets, commas
    and whitespace remains.
    """
    ok_ans, answer_text, ans_lo, _ = _single_block(completion, "<answer>", "</answer>")
    ok_think, _, think_lo, think_hi = _single_block(completion, "<think>", "</think>")
    if ok_think and ok_ans:
        ok_think = think_hi < ans_lo  # reasoning must come before the conclusion
    boxes: list[BBox] = []
    dropped = 0
    if ok_ans:
        for m in _QUAD_RE.finditer(answer_text):
            x1, y1, x2, y2 = (float(g) for g in m.groups())
            if x2 <= x1 or y2 <= y1:
                dropped += 1
                continue
            boxes.append(BBox(x1, y1, x2, y2))
    residue = _SEP_RE.sub("", _QUAD_RE.sub("", answer_text)) if ok_ans else ""
    return ParsedAnswer(
        has_think=ok_think,
        has_answer=ok_ans,
        answer_text=answer_text if ok_ans else "",
        boxes=tuple(boxes),
        answer_is_pure=ok_ans and residue == "",
        dropped_boxes=dropped,
    )


def format_reward(p: ParsedAnswer) -> int:
    """1 iff both tag blocks are present, at least one box parsed, and the answer is pure."""
    return int(p.has_think and p.has_answer and len(p.boxes) > 0 and p.answer_is_pure)


def sine_window(x: float) -> float:
    """Smooth ramp sin^2(pi/2 * x) with the argument clamped into [0, 1].

    Clamping the argument (not just the output) keeps the window monotone,
    which is what makes the length plateau score exactly 1 in its interior.
    """
    xc = min(max(x, 0.0), 1.0)
    s = math.sin(math.pi / 2.0 * xc)
    return s * s


def length_reward(length: int, cfg: RewardConfig) -> float:
    """Product of a rising window over [l_min, l_low] and a falling one over [l_high, l_max]."""
    rise = sine_window((length - cfg.l_min) / (cfg.l_low - cfg.l_min))
    fall = sine_window((cfg.l_max - length) / (cfg.l_max - cfg.l_high))
    return rise * fall


def match_boxes(
    dets: list[BBox],
    gts: list[BBox],
    det_dims: ImageDims,
    gt_dims: ImageDims,
    tau_match: float,
) -> MatchSummary:
    """Optimal gated one-to-one matching of detections onto ground truth.

    Detections are first mapped into ground truth's coordinate space. Scores
    below tau_match are zeroed before the Hungarian solve, which makes the
    surviving-pair IoU sum equal to the exhaustive maximum over all gated
    matchings (sub-threshold pairs can never displace an eligible one).
    """
    scaled = [geometry.rescale(d, det_dims, gt_dims) for d in dets]
    m = geometry.iou_matrix(scaled, gts)
    gated = np.where(m >= tau_match, m, 0.0)
    a = assignment.solve(1.0 - gated)
    survivors = [(i, j) for i, j in a.pairs if m[i, j] >= tau_match]
    return MatchSummary(
        matched_gt=len(survivors),
        iou_score=float(sum(m[i, j] for i, j in survivors)),
        n_det=len(dets),
        n_gt=len(gts),
    )


def oer(m: MatchSummary, cfg: RewardConfig) -> float:
    """Coverage-first score: alpha * matched count + beta * summed matched IoU."""
    return cfg.alpha * m.matched_gt + cfg.beta * m.iou_score


def pdr(m: MatchSummary, cfg: RewardConfig) -> float:
    """Precision score with a redundancy penalty; empty denominators zero their term."""
    first = m.iou_score / (m.n_det ** cfg.gamma) if m.n_det > 0 else 0.0
    second = cfg.lam * m.matched_gt / m.n_gt if m.n_gt > 0 else 0.0
    return first + second


@dataclass(frozen=True)
class RewardBreakdown:
    r_format: int
    r_length: float
    r_str: float
    r_oer: float
    r_pdr: float
    r_ctr: float
    r_total: float
    mode: str                   # "oer" or "pdr"
    length: int
    matched_gt: int
    iou_score: float
    n_det: int
    n_gt: int
    dropped_boxes: int = 0
    boxes: tuple[BBox, ...] = field(default=())


def composite_reward(
    completion: str,
    gts: list[BBox],
    det_dims: ImageDims,
    gt_dims: ImageDims,
    phase: float,
    cfg: RewardConfig = RewardConfig(),
    length: int | None = None,
) -> RewardBreakdown:
    """Full reward for one completion with a per-component breakdown.

    `length` is the caller-supplied token count; when omitted it falls back
    to the whitespace token count of the completion (an approximation —
    real token counting belongs to the model layer).
    """
    parsed = parse_answer(completion)
    token_len = length if length is not None else len(completion.split())
    r_fmt = format_reward(parsed)
    r_len = length_reward(token_len, cfg)
    r_str = cfg.w_format * r_fmt + cfg.w_length * r_len
    summary = match_boxes(list(parsed.boxes), gts, det_dims, gt_dims, cfg.tau_match)
    r_oer = oer(summary, cfg)
    r_pdr = pdr(summary, cfg)
    use_oer = phase < cfg.phase_switch
    r_ctr = r_oer if use_oer else r_pdr
    total = cfg.w_str * r_str + cfg.w_ctr * r_ctr
    return RewardBreakdown(
        r_format=r_fmt,
        r_length=r_len,
        r_str=r_str,
        r_oer=r_oer,
        r_pdr=r_pdr,
        r_ctr=r_ctr,
        r_total=total,
        mode="oer" if use_oer else "pdr",
        length=token_len,
        matched_gt=summary.matched_gt,
        iou_score=summary.iou_score,
        n_det=summary.n_det,
        n_gt=summary.n_gt,
        dropped_boxes=parsed.dropped_boxes,
        boxes=parsed.boxes,
    )
