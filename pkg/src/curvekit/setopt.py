"""Direct set optimization of K prediction slots against one scene.

No network is involved: the slots themselves are the free parameters and
receive gradients through the bipartite matching and the pair loss, so the
whole assignment-and-loss mechanism can be checked end to end.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .curves import CIRCLE, LINE, NO_OBJECT
from .errors import CollinearPoints
from .losses import ClassWeights, grad_losses, scene_loss
from .matcher import Assignment, match_scene
from .metrics import ScoredCurve, evaluate_scene
from .slot import LOGITS, PredictionSlot
from .synthgen import Scene, rng_for

log = logging.getLogger(__name__)

INIT_JITTER = 0.05
INIT_SCALAR = 0.1
DEFAULT_LR = 0.05
# logits move on a different scale from geometry; they get a larger step
LOGIT_LR_SCALE = 10.0

Schedule = Callable[[int], float]


@dataclass
class OptState:
    slots: list
    step: int = 0
    lr: float = DEFAULT_LR
    loss_history: list = field(default_factory=list)


def cosine_schedule(base: float, iterations: int, floor: float = 0.0) -> Schedule:
    """Learning rate decayed from ``base`` to ``floor`` along half a cosine."""
    if base <= 0:
        raise ValueError("learning rate must be positive")
    span = max(1, iterations)

    def lr(step: int) -> float:
        frac = min(step, span) / span
        return floor + 0.5 * (base - floor) * (1.0 + math.cos(math.pi * frac))

    return lr


def _random_unit(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def init_slots(k: int, scene: Scene, seed: int) -> OptState:
    """K slots whose point-valued parameters sit near distinct cloud points."""
    m = len(scene.curves)
    if k < m:
        raise ValueError(f"k={k} is smaller than the number of ground-truth curves ({m})")
    pts = np.asarray(scene.points, dtype=float)
    if len(pts) < k:
        raise ValueError(f"cloud has {len(pts)} points, fewer than k={k}")
    rng = rng_for(seed, "init")
    anchors = pts[rng.choice(len(pts), size=k, replace=False)]
    slots = []
    for a in anchors:
        def near(count):
            return a + rng.uniform(-INIT_JITTER, INIT_JITTER, size=(count, 3))

        slots.append(PredictionSlot.build(
            logits=np.zeros(5),
            bezier=near(4).ravel(),
            line=np.concatenate([near(1)[0], _random_unit(rng), [INIT_SCALAR]]),
            circle=np.concatenate([near(1)[0], _random_unit(rng), [INIT_SCALAR]]),
            arc=near(3).ravel(),
        ))
    return OptState(slots)


def _pairs(assignment: Assignment, gts: Sequence) -> list:
    matched = assignment.gt_for_prediction()
    return [(j, gts[matched[j]] if j in matched else None) for j in range(len(assignment.sigma))]


def step(state: OptState, scene: Scene, weights: Optional[ClassWeights] = None) -> OptState:
    """One gradient-descent step at ``state.lr`` with the assignment held fixed.

    Matched slots move their logits and the block of their gt class; unmatched
    slots move only their logits, towards no-object.
    """
    weights = weights or ClassWeights.uniform()
    gts = scene.curves
    assignment = match_scene(state.slots, gts)
    pairs = _pairs(assignment, gts)
    norm = max(1, len(gts))
    loss = scene_loss(state.slots, pairs, weights, len(gts))
    new_slots = []
    for j, gt in pairs:
        g = grad_losses(state.slots[j], gt, weights, on_kink="zero") / norm
        g[LOGITS] *= LOGIT_LR_SCALE
        slot = state.slots[j].copy()
        slot.vector -= state.lr * g
        if gt is not None and gt.cls in (LINE, CIRCLE):
            slot.project((gt.cls,))
        new_slots.append(slot)
    return OptState(new_slots, state.step + 1, state.lr, state.loss_history + [loss])


def resolve(slots: Sequence[PredictionSlot]) -> list[ScoredCurve]:
    """Curves of every slot whose argmax class is not no-object.

    Arc slots whose three points are collinear have no curve and are dropped.
    """
    out = []
    for j, s in enumerate(slots):
        c = s.predicted_class()
        if c == NO_OBJECT:
            continue
        try:
            curve = s.curve(c)
        except CollinearPoints:
            log.warning("slot %d predicts a degenerate arc; dropped", j)
            continue
        out.append(ScoredCurve(curve, float(s.probs()[c])))
    return out


def optimize(scene: Scene, k: int, iterations: int,
             lr_schedule: Union[Schedule, float, None] = None, seed: int = 0,
             weights: Optional[ClassWeights] = None, state: Optional[OptState] = None,
             callback: Optional[Callable[[OptState], None]] = None):
    """Run ``iterations`` steps from ``init_slots`` (or a given state).

    ``lr_schedule`` is a callable ``step -> lr`` or a base rate for
    :func:`cosine_schedule`. Returns the final state and the report of its
    resolved curves (see :func:`resolve`) against the ground truth.
    """
    if lr_schedule is None:
        lr_schedule = DEFAULT_LR
    if not callable(lr_schedule):
        lr_schedule = cosine_schedule(float(lr_schedule), iterations)
    if state is None:
        state = init_slots(k, scene, seed)
    for it in range(iterations):
        state.lr = lr_schedule(it)
        state = step(state, scene, weights)
        if callback is not None:
            callback(state)
    return state, evaluate_scene(resolve(state.slots), scene.curves)

