"""Geometry-aware bipartite matching of prediction slots to ground-truth curves.

The cost of assigning slot ``j`` to curve ``i`` is the negative predicted
probability of the curve's class plus the class-specific parameter loss.
The ``K - M`` leftover slots are matched to no-object pad columns of
constant cost 0, which leaves the real assignment equal to the rectangular
optimum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .curves import ARC, BEZIER, ParametricCurve
from .losses import loss_param
from .slot import BLOCKS, PredictionSlot, softmax

PAD_COST = 0.0


@dataclass(frozen=True)
class CostMatrix:
    """K x K costs; rows are predictions, the first ``num_gt`` columns real curves."""

    matrix: np.ndarray
    num_gt: int

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def is_pad(self, column: int) -> bool:
        return column >= self.num_gt


@dataclass(frozen=True)
class Assignment:
    """``sigma[i]`` is the prediction row assigned to column ``i``."""

    sigma: np.ndarray
    costs: np.ndarray
    total: float
    num_gt: int

    def matched(self) -> list[tuple[int, int]]:
        """``(prediction, gt)`` pairs for the real ground-truth columns."""
        return [(int(self.sigma[i]), i) for i in range(self.num_gt)]

    def unmatched(self) -> list[int]:
        return sorted(int(j) for j in self.sigma[self.num_gt:])

    def gt_for_prediction(self) -> dict[int, int]:
        return {j: i for j, i in self.matched()}


def pair_cost(pred: PredictionSlot, gt: ParametricCurve) -> float:
    return -float(pred.probs()[gt.cls]) + loss_param(pred, gt)


def _param_cost_column(blocks: np.ndarray, gt: ParametricCurve) -> np.ndarray:
    g = gt.to_array()
    if gt.cls in (BEZIER, ARC):
        p = blocks.reshape(len(blocks), -1, 3)
        gp = g.reshape(-1, 3)
        d1 = np.abs(p - gp).sum(axis=(1, 2))
        d2 = np.abs(p[:, ::-1] - gp).sum(axis=(1, 2))
        return np.minimum(d1, d2)
    dm = np.abs(blocks[:, 0:3] - g[0:3]).sum(axis=1)
    b1 = np.abs(blocks[:, 3:6] - g[3:6]).sum(axis=1)
    b2 = np.abs(blocks[:, 3:6] + g[3:6]).sum(axis=1)
    return dm + np.minimum(b1, b2) + np.abs(blocks[:, 6] - g[6])


def build_cost_matrix(preds: Sequence[PredictionSlot], gts: Sequence[ParametricCurve]) -> CostMatrix:
    k, m = len(preds), len(gts)
    if m > k:
        raise ValueError(f"more ground-truth curves ({m}) than prediction slots ({k})")
    vectors = np.stack([p.vector for p in preds]) if k else np.zeros((0, 40))
    probs = np.stack([softmax(p.logits) for p in preds]) if k else np.zeros((0, 5))
    cost = np.full((k, k), PAD_COST)
    for i, gt in enumerate(gts):
        cost[:, i] = -probs[:, gt.cls] + _param_cost_column(vectors[:, BLOCKS[gt.cls]], gt)
    return CostMatrix(cost, m)


def hungarian(cost) -> Assignment:
    """Minimum-cost perfect matching of a square matrix (shortest augmenting paths).

    Columns are inserted in index order; ties between rows are broken towards
    the lowest row index. ``cost`` may be a :class:`CostMatrix` or an array.
    """
    num_gt = cost.num_gt if isinstance(cost, CostMatrix) else None
    c = np.asarray(cost.matrix if isinstance(cost, CostMatrix) else cost, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError(f"cost matrix must be square, got {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix has non-finite entries")
    n = c.shape[0]
    if num_gt is None:
        num_gt = n
    # a[i, j]: column i of the input (to be assigned) against prediction row j
    a = c.T
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    owner = np.zeros(n + 1, dtype=int)  # owner[j]: 1-based column holding row j
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used[1:]
            cur = a[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    sigma = np.empty(n, dtype=int)
    for j in range(1, n + 1):
        sigma[owner[j] - 1] = j - 1
    costs = c[sigma, np.arange(n)]
    return Assignment(sigma, costs, float(np.sum(costs)), num_gt)


def match_scene(preds: Sequence[PredictionSlot], gts: Sequence[ParametricCurve]) -> Assignment:
    return hungarian(build_cost_matrix(preds, gts))
