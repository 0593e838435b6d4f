"""Matching/training losses for curve set prediction, with gradients.

Loss terms per matched (prediction, ground truth) pair:

* weighted cross entropy on the class logits,
* a class-specific L1 parameter loss (order-invariant for point sequences,
  sign-invariant for point/vector/scalar blocks),
* Chamfer distance between 64 samples of the predicted and true curve.

Pairs whose ground truth is the no-object placeholder only contribute the
cross-entropy term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .curves import (
    ARC, BEZIER, NO_OBJECT, Arc, ParametricCurve, sample_uniform,
)
from .errors import CollinearPoints, NonSmoothPoint
from .slot import BLOCKS, LOGITS, SLOT_SIZE, PredictionSlot, curve_from_block, softmax
from .spatial import mutual_nearest_sq_distances

CHAMFER_SAMPLES = 64
PROB_FLOOR = 1e-12
KINK_TOL = 1e-7
FD_STEP = 1e-5
ARC_JITTER = 1e-6


@dataclass
class LossStats:
    degenerate_arcs: int = 0


stats = LossStats()


@dataclass(frozen=True)
class ClassWeights:
    weights: tuple

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        if len(w) != 5 or min(w) < 0 or abs(sum(w) - 1.0) > 1e-9:
            raise ValueError(f"class weights must be 5 nonnegative values summing to 1, got {w}")
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls) -> "ClassWeights":
        return cls((0.2,) * 5)

    def __getitem__(self, c: int) -> float:
        return self.weights[c]

    def as_array(self) -> np.ndarray:
        return np.array(self.weights)


@dataclass(frozen=True)
class LossBreakdown:
    ce: float
    param: float
    chamfer: float

    @property
    def total(self) -> float:
        return self.ce + self.param + self.chamfer


def compute_class_weights(counts: Sequence[float], queries_per_sample: int, train_samples: int) -> ClassWeights:
    """Inverse-square-root class frequencies, normalized to sum to one.

    ``counts`` are the curve counts of classes 1..4; the no-object count is
    the remainder of ``queries_per_sample * train_samples`` predictions.
    """
    n = np.asarray(counts, dtype=float)
    if n.shape != (4,) or np.any(n <= 0):
        raise ValueError(f"need four positive per-class counts, got {counts!r}")
    n0 = float(queries_per_sample) * float(train_samples) - n.sum()
    if n0 <= 0:
        raise ValueError(f"no-object count must be positive, got {n0}")
    w = 1.0 / np.sqrt(np.concatenate([[n0], n]))
    return ClassWeights(tuple(w / w.sum()))


# -- parameter losses -------------------------------------------------------


def _seq_branches(pred: np.ndarray, gt: np.ndarray):
    d1 = pred - gt
    d2 = pred[::-1] - gt
    return d1, d2


def loss_seq(pred, gt) -> float:
    """min(|P - G|_1, |rev(P) - G|_1) for ordered point sequences."""
    p = np.asarray(pred, dtype=float)
    g = np.asarray(gt, dtype=float)
    p = p.reshape(-1, 3)
    g = g.reshape(-1, 3)
    if p.shape != g.shape:
        raise ValueError(f"sequence lengths differ: {p.shape} vs {g.shape}")
    d1, d2 = _seq_branches(p, g)
    return float(min(np.abs(d1).sum(), np.abs(d2).sum()))


def _hybrid_parts(pred, gt):
    p = np.concatenate([np.ravel(pred[0]), np.ravel(pred[1]), np.ravel(pred[2])]) if isinstance(pred, tuple) else np.asarray(pred, dtype=float)
    g = np.concatenate([np.ravel(gt[0]), np.ravel(gt[1]), np.ravel(gt[2])]) if isinstance(gt, tuple) else np.asarray(gt, dtype=float)
    if p.shape != (7,) or g.shape != (7,):
        raise ValueError("hybrid parameters are (point3, vector3, scalar)")
    return p, g


def loss_hybrid(pred, gt) -> float:
    """Point/vector/scalar L1 loss, minimized over the sign of the true vector.

    ``pred`` and ``gt`` are ``(mid, vec, scalar)`` tuples or flat 7-vectors.
    """
    p, g = _hybrid_parts(pred, gt)
    dm = np.abs(p[0:3] - g[0:3]).sum()
    b1 = dm + np.abs(p[3:6] - g[3:6]).sum()
    b2 = dm + np.abs(p[3:6] + g[3:6]).sum()
    return float(min(b1, b2) + abs(p[6] - g[6]))


def _require_curve_gt(gt) -> None:
    if gt is None or getattr(gt, "cls", NO_OBJECT) == NO_OBJECT:
        raise ValueError("no-object ground truth has no parameters")


def loss_param(pred: PredictionSlot, gt: ParametricCurve) -> float:
    _require_curve_gt(gt)
    block = pred.block(gt.cls)
    if gt.cls in (BEZIER, ARC):
        return loss_seq(block, gt.to_array())
    return loss_hybrid(block, gt.to_array())


# -- Chamfer ----------------------------------------------------------------


def chamfer_points(x, y) -> float:
    """Sum of the two directed mean squared nearest-neighbor distances."""
    dx, dy = mutual_nearest_sq_distances(x, y)
    return float(dx.mean() + dy.mean())


def _jittered_arc(points: np.ndarray, gt: Optional[Arc]) -> Arc:
    """Nearest usable arc for a degenerate predicted triple."""
    p = points.copy()
    if gt is not None:
        g = gt.points
        n = np.cross(g[1] - g[0], g[2] - g[1])
    else:
        n = np.cross(p[2] - p[0], [0.0, 0.0, 1.0])
    candidates = [n]
    chord = p[2] - p[0]
    for axis in np.eye(3):
        candidates.append(np.cross(chord, axis) if np.linalg.norm(chord) > 0 else axis)
    for c in candidates:
        norm = np.linalg.norm(c)
        if norm == 0.0:
            continue
        q = p.copy()
        q[1] = q[1] + ARC_JITTER * c / norm
        if np.linalg.norm(q[2] - q[0]) == 0.0:
            q[2] = q[2] + ARC_JITTER * np.roll(c / norm, 1)
        try:
            return Arc(*q)
        except CollinearPoints:
            continue
    raise CollinearPoints("could not repair degenerate arc")


def block_curve(cls: int, block, gt: Optional[ParametricCurve] = None) -> ParametricCurve:
    """Curve from a raw block; degenerate arcs are repaired and counted."""
    try:
        return curve_from_block(cls, block)
    except CollinearPoints:
        if cls != ARC:
            raise
        stats.degenerate_arcs += 1
        return _jittered_arc(np.asarray(block, dtype=float).reshape(3, 3), gt if isinstance(gt, Arc) else None)


def _chamfer_block(cls, block, gt_samples, gt, n):
    return chamfer_points(sample_uniform(block_curve(cls, block, gt), n), gt_samples)


def loss_chamfer_curves(pred: PredictionSlot, gt: ParametricCurve, samples: int = CHAMFER_SAMPLES) -> float:
    _require_curve_gt(gt)
    return _chamfer_block(gt.cls, pred.block(gt.cls), sample_uniform(gt, samples), gt, samples)


# -- classification ---------------------------------------------------------


def loss_cross_entropy(probs, gt_class: int, weights: ClassWeights) -> float:
    p = np.asarray(probs, dtype=float)
    if p.shape != (5,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
        raise ValueError(f"malformed probability vector {p!r}")
    return float(-weights[gt_class] * math.log(max(p[gt_class], PROB_FLOOR)))


def _gt_class(gt) -> int:
    return NO_OBJECT if gt is None else gt.cls


def loss_total(pred: PredictionSlot, gt: Optional[ParametricCurve], weights: ClassWeights) -> LossBreakdown:
    """Loss for one matched pair; ``gt=None`` is the no-object placeholder."""
    ce = loss_cross_entropy(pred.probs(), _gt_class(gt), weights)
    if gt is None:
        return LossBreakdown(ce, 0.0, 0.0)
    return LossBreakdown(ce, loss_param(pred, gt), loss_chamfer_curves(pred, gt))


def scene_loss(slots: Sequence[PredictionSlot], pairs, weights: ClassWeights, num_gt: int) -> float:
    """Sum of pair losses over all K pairs, divided by max(1, num_gt).

    ``pairs`` is an iterable of ``(slot_index, gt_curve_or_None)``.
    """
    total = sum(loss_total(slots[j], gt, weights).total for j, gt in pairs)
    return total / max(1, num_gt)


# -- gradients --------------------------------------------------------------


def _kink(msg, on_kink):
    if on_kink == "raise":
        raise NonSmoothPoint(msg)


def grad_seq(pred, gt, on_kink: str = "raise") -> np.ndarray:
    """d loss_seq / d pred, flattened. ``on_kink`` is "raise" or "zero"."""
    p = np.asarray(pred, dtype=float).reshape(-1, 3)
    g = np.asarray(gt, dtype=float).reshape(-1, 3)
    d1, d2 = _seq_branches(p, g)
    l1, l2 = np.abs(d1).sum(), np.abs(d2).sum()
    if abs(l1 - l2) < KINK_TOL:
        _kink(f"sequence branches tie (margin {abs(l1 - l2):.3g})", on_kink)
        return np.zeros(p.size)
    if l1 < l2:
        d = d1
        grad = np.sign(d1)
    else:
        d = d2[::-1]
        grad = np.sign(d2)[::-1]
    flat = np.abs(d) < KINK_TOL
    if flat.any():
        _kink("L1 component at zero", on_kink)
        grad = np.where(flat, 0.0, grad)
    return grad.ravel()


def grad_hybrid(pred, gt, on_kink: str = "raise") -> np.ndarray:
    p, g = _hybrid_parts(pred, gt)
    dm = p[0:3] - g[0:3]
    dv1 = p[3:6] - g[3:6]
    dv2 = p[3:6] + g[3:6]
    l1, l2 = np.abs(dv1).sum(), np.abs(dv2).sum()
    grad = np.zeros(7)
    diffs = np.concatenate([dm, dv1 if l1 < l2 else dv2, [p[6] - g[6]]])
    grad[:] = np.sign(diffs)
    flat = np.abs(diffs) < KINK_TOL
    if abs(l1 - l2) < KINK_TOL:
        _kink(f"vector sign branches tie (margin {abs(l1 - l2):.3g})", on_kink)
        flat[3:6] = True
    if flat.any():
        _kink("L1 component at zero", on_kink)
        grad[flat] = 0.0
    return grad


def grad_cross_entropy(logits, gt_class: int, weights: ClassWeights) -> np.ndarray:
    """d/d logits of -w_c log softmax(logits)_c."""
    p = softmax(logits)
    if p[gt_class] < PROB_FLOOR:
        return np.zeros(5)
    onehot = np.zeros(5)
    onehot[gt_class] = 1.0
    return weights[gt_class] * (p - onehot)


def grad_chamfer_fd(pred: PredictionSlot, gt: ParametricCurve, step: float = FD_STEP,
                    samples: int = CHAMFER_SAMPLES) -> np.ndarray:
    """Central finite differences of the Chamfer term over the gt-class block."""
    gt_samples = sample_uniform(gt, samples)
    block = pred.block(gt.cls)
    size = block.size
    # rows 0..size-1 are +step perturbations, the rest -step
    probes = np.repeat(block[None, :], 2 * size, axis=0)
    idx = np.arange(size)
    probes[idx, idx] += step
    probes[size + idx, idx] -= step
    pts = np.stack([sample_uniform(block_curve(gt.cls, b, gt), samples) for b in probes])
    # expanded form; cancellation error is far below the difference step
    d = (np.einsum("pik,pik->pi", pts, pts)[:, :, None] + np.einsum("jk,jk->j", gt_samples, gt_samples)[None, None, :]
         - 2.0 * pts @ gt_samples.T)
    cd = d.min(axis=2).mean(axis=1) + d.min(axis=1).mean(axis=1)
    return (cd[:size] - cd[size:]) / (2 * step)


def grad_losses(pred: PredictionSlot, gt: Optional[ParametricCurve], weights: ClassWeights,
                chamfer: bool = True, on_kink: str = "raise") -> np.ndarray:
    """Gradient of the pair loss with respect to the slot's flat parameter vector.

    Only the logits and the gt-class block receive nonzero entries. The
    cross-entropy and parameter terms are analytic; the Chamfer term uses
    central differences. With ``on_kink="zero"`` L1 kinks get subgradient 0
    instead of raising :class:`NonSmoothPoint`.
    """
    grad = np.zeros(SLOT_SIZE)
    grad[LOGITS] = grad_cross_entropy(pred.logits, _gt_class(gt), weights)
    if gt is None:
        return grad
    block = pred.block(gt.cls)
    if gt.cls in (BEZIER, ARC):
        g = grad_seq(block, gt.to_array(), on_kink)
    else:
        g = grad_hybrid(block, gt.to_array(), on_kink)
    if chamfer:
        g = g + grad_chamfer_fd(pred, gt)
    grad[BLOCKS[gt.cls]] = g
    return grad
