"""Minimum-cost one-to-one assignment with an IoU gate.

`solve` wraps scipy's Hungarian solver behind a rectangular-friendly result
type; `gate` drops matched pairs whose overlap falls below a threshold and
returns their endpoints to the unmatched sets. Results are presented in a
canonical order (pairs by row index, unmatched indices ascending) so runs
are reproducible bit-for-bit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidCost


@dataclass(frozen=True)
class Assignment:
    """One-to-one pairing over a cost matrix; every index appears exactly once."""

    pairs: tuple[tuple[int, int], ...]
    unmatched_rows: tuple[int, ...]
    unmatched_cols: tuple[int, ...]

    @property
    def matched_rows(self) -> set[int]:
        return {i for i, _ in self.pairs}

    @property
    def matched_cols(self) -> set[int]:
        return {j for _, j in self.pairs}

    def total_cost(self, cost: np.ndarray) -> float:
        return float(sum(cost[i, j] for i, j in self.pairs))


def solve(cost: np.ndarray) -> Assignment:
    """Minimize total cost over maximum matchings of a (possibly rectangular) matrix."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise InvalidCost(f"cost matrix must be 2-D, got shape {cost.shape}")
    n_rows, n_cols = cost.shape
    if cost.size and not np.all(np.isfinite(cost)):
        raise InvalidCost("cost matrix contains non-finite entries")
    if n_rows == 0 or n_cols == 0:
        return Assignment((), tuple(range(n_rows)), tuple(range(n_cols)))
    rows, cols = linear_sum_assignment(cost)
    pairs = tuple(sorted((int(i), int(j)) for i, j in zip(rows, cols)))
    matched_r = {i for i, _ in pairs}
    matched_c = {j for _, j in pairs}
    return Assignment(
        pairs,
        tuple(i for i in range(n_rows) if i not in matched_r),
        tuple(j for j in range(n_cols) if j not in matched_c),
    )


def gate(a: Assignment, iou: np.ndarray, tau: float) -> Assignment:
    """Remove pairs with iou[i, j] < tau, returning endpoints to the unmatched sets."""
    iou = np.asarray(iou, dtype=np.float64)
    kept = tuple(p for p in a.pairs if iou[p[0], p[1]] >= tau)
    dropped = [p for p in a.pairs if iou[p[0], p[1]] < tau]
    if not dropped:
        return a
    return Assignment(
        kept,
        tuple(sorted(set(a.unmatched_rows) | {i for i, _ in dropped})),
        tuple(sorted(set(a.unmatched_cols) | {j for _, j in dropped})),
    )
