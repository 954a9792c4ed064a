"""HOTA-family evaluation: detection, association, and localization accuracy.

At each overlap threshold alpha, predictions are matched to ground truth
frame by frame with a Hungarian solve that maximizes summed IoU; matched
pairs below alpha are discarded. TP/FN/FP give DetA/DetRe/DetPr; the
per-identity-pair match counts give AssA/AssRe/AssPr (each true positive
scores its track pair's Jaccard overlap TPA/(TPA+FNA+FPA)); LocA is the
mean matched IoU. HOTA_alpha = sqrt(DetA_alpha * AssA_alpha), and headline
numbers average the 19-point alpha grid 0.05..0.95.

Because the match objective does not depend on alpha, the matching runs
once per frame and only the alpha filter varies. Ratios with zero
denominators evaluate to 0. Aggregation over expressions pools raw counts
(micro-averaging) with identities namespaced per expression.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import assignment
from .dataio import TrackingResult
from .errors import NoData, SequenceMismatch
from .geometry import iou_matrix

ALPHA_GRID: tuple[float, ...] = tuple(k / 20.0 for k in range(1, 20))
_EPS = float(np.finfo(np.float64).eps)


@dataclass(frozen=True)
class AlphaComponents:
    alpha: float
    hota: float
    det_a: float
    det_re: float
    det_pr: float
    ass_a: float
    ass_re: float
    ass_pr: float
    loc_a: float
    tp: int
    fn: int
    fp: int


@dataclass(frozen=True)
class MetricReport:
    hota: float
    deta: float
    assa: float
    detre: float
    detpr: float
    assre: float
    asspr: float
    loca: float
    per_alpha: tuple[AlphaComponents, ...]

    def as_row(self) -> dict[str, float]:
        return {
            "HOTA": self.hota, "DetA": self.deta, "AssA": self.assa,
            "DetRe": self.detre, "DetPr": self.detpr, "AssRe": self.assre,
            "AssPr": self.asspr, "LocA": self.loca,
        }


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


class PairAccumulator:
    """Pools match candidates and identity counts across (pred, gt) pairs."""

    def __init__(self):
        self.gt_count: dict[tuple[int, int], int] = {}
        self.pred_count: dict[tuple[int, int], int] = {}
        self.candidates: list[tuple[tuple[int, int], tuple[int, int], float]] = []
        self.total_gt = 0
        self.total_pred = 0
        self._namespace = 0

    def add(self, pred: TrackingResult, gt: TrackingResult) -> None:
        if pred.frame_count != gt.frame_count:
            raise SequenceMismatch(
                f"prediction spans {pred.frame_count} frames, ground truth {gt.frame_count}")
        ns = self._namespace
        self._namespace += 1
        for frame in range(1, gt.frame_count + 1):
            gt_entries = gt.at(frame)
            pred_entries = pred.at(frame)
            for tid, _ in gt_entries:
                self.gt_count[(ns, tid)] = self.gt_count.get((ns, tid), 0) + 1
            for tid, _ in pred_entries:
                self.pred_count[(ns, tid)] = self.pred_count.get((ns, tid), 0) + 1
            self.total_gt += len(gt_entries)
            self.total_pred += len(pred_entries)
            if not gt_entries or not pred_entries:
                continue
            m = iou_matrix([b for _, b in pred_entries], [b for _, b in gt_entries])
            best = assignment.solve(-m)
            for i, j in best.pairs:
                overlap = float(m[i, j])
                if overlap > 0.0:
                    self.candidates.append(
                        ((ns, gt_entries[j][0]), (ns, pred_entries[i][0]), overlap))

    def components(self, alpha: float) -> AlphaComponents:
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"alpha must lie strictly in (0, 1), got {alpha}")
        thresh = alpha - _EPS
        tp = 0
        loc_sum = 0.0
        pair_matches: dict[tuple[tuple[int, int], tuple[int, int]], int] = {}
        for g_key, p_key, overlap in self.candidates:
            if overlap >= thresh:
                tp += 1
                loc_sum += overlap
                pair_matches[(g_key, p_key)] = pair_matches.get((g_key, p_key), 0) + 1
        fn = self.total_gt - tp
        fp = self.total_pred - tp
        ass_a = ass_re = ass_pr = 0.0
        for (g_key, p_key), m in pair_matches.items():
            gtc = self.gt_count[g_key]
            pc = self.pred_count[p_key]
            ass_a += m * _ratio(m, gtc + pc - m)
            ass_re += m * _ratio(m, gtc)
            ass_pr += m * _ratio(m, pc)
        ass_a, ass_re, ass_pr = _ratio(ass_a, tp), _ratio(ass_re, tp), _ratio(ass_pr, tp)
        det_a = _ratio(tp, tp + fn + fp)
        return AlphaComponents(
            alpha=alpha,
            hota=float(np.sqrt(det_a * ass_a)),
            det_a=det_a,
            det_re=_ratio(tp, tp + fn),
            det_pr=_ratio(tp, tp + fp),
            ass_a=ass_a,
            ass_re=ass_re,
            ass_pr=ass_pr,
            loc_a=_ratio(loc_sum, tp),
            tp=tp, fn=fn, fp=fp,
        )

    def report(self) -> MetricReport:
        per_alpha = tuple(self.components(a) for a in ALPHA_GRID)
        mean = lambda attr: float(np.mean([getattr(c, attr) for c in per_alpha]))
        return MetricReport(
            hota=mean("hota"), deta=mean("det_a"), assa=mean("ass_a"),
            detre=mean("det_re"), detpr=mean("det_pr"), assre=mean("ass_re"),
            asspr=mean("ass_pr"), loca=mean("loc_a"), per_alpha=per_alpha,
        )


def evaluate_at_alpha(pred: TrackingResult, gt: TrackingResult, alpha: float) -> AlphaComponents:
    acc = PairAccumulator()
    acc.add(pred, gt)
    return acc.components(alpha)


def evaluate(pred: TrackingResult, gt: TrackingResult) -> MetricReport:
    acc = PairAccumulator()
    acc.add(pred, gt)
    return acc.report()


def evaluate_expression_set(
    results: Sequence[tuple[str, TrackingResult, TrackingResult]],
) -> MetricReport:
    """Micro-averaged report over (expression, pred, gt) triples."""
    if not results:
        raise NoData("no expression results to evaluate")
    acc = PairAccumulator()
    for _expr, pred, gt in results:
        acc.add(pred, gt)
    return acc.report()


def macro_average(reports: Sequence[MetricReport]) -> MetricReport:
    """Unweighted mean over per-expression reports (the alternative to pooling).

    Pooled counts weight expressions by how many detections they carry; the
    macro mean weights every expression equally. Per-alpha components are
    averaged pointwise, so hota = sqrt(det_a * ass_a) no longer holds exactly
    inside the averaged rows — headline numbers are means of the originals.
    """
    if not reports:
        raise NoData("no reports to average")
    mean = lambda attr: float(np.mean([getattr(r, attr) for r in reports]))
    per_alpha = []
    for i, alpha in enumerate(ALPHA_GRID):
        cells = [r.per_alpha[i] for r in reports]
        cell_mean = lambda attr: float(np.mean([getattr(c, attr) for c in cells]))
        per_alpha.append(AlphaComponents(
            alpha=alpha,
            hota=cell_mean("hota"),
            det_a=cell_mean("det_a"),
            det_re=cell_mean("det_re"),
            det_pr=cell_mean("det_pr"),
            ass_a=cell_mean("ass_a"),
            ass_re=cell_mean("ass_re"),
            ass_pr=cell_mean("ass_pr"),
            loc_a=cell_mean("loc_a"),
            tp=sum(c.tp for c in cells),
            fn=sum(c.fn for c in cells),
            fp=sum(c.fp for c in cells),
        ))
    return MetricReport(
        hota=mean("hota"), deta=mean("deta"), assa=mean("assa"),
        detre=mean("detre"), detpr=mean("detpr"), assre=mean("assre"),
        asspr=mean("asspr"), loca=mean("loca"), per_alpha=tuple(per_alpha),
    )
