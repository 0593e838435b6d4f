import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import any_curve, arcs, beziers
from curvekit import losses
from curvekit.curves import ARC, BEZIER, CIRCLE, LINE, Arc, BezierCurve, Circle, LineSegment, reverse
from curvekit.errors import NonSmoothPoint
from curvekit.losses import (
    ClassWeights, compute_class_weights, grad_cross_entropy, grad_hybrid, grad_losses, grad_seq,
    loss_chamfer_curves, loss_cross_entropy, loss_hybrid, loss_param, loss_seq, loss_total,
    chamfer_points, scene_loss,
)
from curvekit.slot import BLOCKS, LOGITS, PredictionSlot, softmax

REFERENCE_COUNTS = (11347, 200751, 34672, 37528)
arrays = st.lists(st.floats(-2, 2), min_size=3, max_size=3).map(np.array)


def fd_grad(f, x, h=1e-6):
    x = np.array(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


# -- class weights ----------------------------------------------------------


def test_reference_class_weights(oracle):
    w = compute_class_weights(REFERENCE_COUNTS, 128, 8389).as_array()
    assert np.allclose(w, oracle["class_weights_reference"], atol=1e-15)
    assert np.allclose(w, [0.048, 0.403, 0.096, 0.231, 0.222], atol=5e-4)


def test_equal_effective_counts_give_uniform_weights():
    # n0 = 4*5 - 16 = 4 equals every class count
    w = compute_class_weights([4, 4, 4, 4], 4, 5).as_array()
    assert np.allclose(w, 0.2, atol=1e-15)


@given(st.floats(0.01, 1000))
def test_class_weights_scale_invariant(s):
    base = compute_class_weights(REFERENCE_COUNTS, 128, 8389).as_array()
    scaled = compute_class_weights([c * s for c in REFERENCE_COUNTS], 128, 8389 * s).as_array()
    assert np.allclose(base, scaled, atol=1e-12)


def test_class_weights_reject_bad_counts():
    with pytest.raises(ValueError):
        compute_class_weights([1, 2, 3, 0], 8, 10)
    with pytest.raises(ValueError):
        compute_class_weights([10, 10, 10, 10], 4, 10)


def test_class_weights_must_sum_to_one():
    with pytest.raises(ValueError):
        ClassWeights((0.5, 0.5, 0.5, 0.0, 0.0))


# -- sequence loss ----------------------------------------------------------


def test_seq_identical_and_reversed_zero():
    g = np.arange(12.0).reshape(4, 3)
    assert loss_seq(g, g) == 0.0
    assert loss_seq(g[::-1], g) == 0.0


def test_seq_single_offset(oracle):
    g = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 1]], dtype=float)
    p = g.copy()
    p[0, 0] += 0.1
    assert loss_seq(p, g) == pytest.approx(oracle["seq_loss_offset"], abs=1e-15)


def test_seq_length_mismatch():
    with pytest.raises(ValueError):
        loss_seq(np.zeros((4, 3)), np.zeros((3, 3)))


@given(beziers(), beziers())
def test_seq_reversal_branch_swap(p, g):
    assert loss_seq(reverse(p).to_array(), g.to_array()) == loss_seq(p.to_array(), g.to_array())


@given(arcs(), arcs())
def test_seq_arc_nonnegative_and_symmetric_in_reversal(p, g):
    v = loss_seq(p.to_array(), g.to_array())
    assert v >= 0
    assert v == pytest.approx(loss_seq(p.to_array(), reverse(g).to_array()), abs=1e-12)


# -- hybrid loss ------------------------------------------------------------


def test_hybrid_identical_zero():
    x = (np.zeros(3), np.array([0, 0, 1.0]), 1.0)
    assert loss_hybrid(x, x) == 0.0


def test_hybrid_negated_vector_zero():
    p = (np.zeros(3), np.array([0.6, 0, 0.8]), 1.0)
    g = (np.zeros(3), -np.array([0.6, 0, 0.8]), 1.0)
    assert loss_hybrid(p, g) == 0.0


def test_hybrid_offset_and_radius(oracle):
    p = (np.array([0.1, 0, 0]), np.array([0, 0, 1.0]), 1.0)
    g = (np.zeros(3), np.array([0, 0, 1.0]), 1.2)
    assert loss_hybrid(p, g) == pytest.approx(oracle["hybrid_loss_offset"], abs=1e-15)


@given(arrays, arrays, st.floats(0.1, 2), arrays, arrays, st.floats(0.1, 2), st.booleans(), st.booleans())
def test_hybrid_sign_flip_invariance(pm, pv, ps, gm, gv, gs, fp, fg):
    base = loss_hybrid((pm, pv, ps), (gm, gv, gs))
    flipped = loss_hybrid((pm, -pv if fp else pv, ps), (gm, -gv if fg else gv, gs))
    assert flipped == pytest.approx(base, abs=1e-12)
    assert base >= 0


# -- loss_param dispatch ----------------------------------------------------


def test_param_uses_only_gt_class_block():
    gt = LineSegment([0, 0, 0], [1, 0, 0], 1.0)
    slot = PredictionSlot.build(line=gt, bezier=np.full(12, 7.0), circle=[5, 5, 5, 0, 1, 0, 9])
    assert loss_param(slot, gt) == 0.0


def test_param_dispatch_matches_direct_calls():
    rng = np.random.default_rng(3)
    slot = PredictionSlot(rng.normal(size=40))
    circ = Circle([0, 0, 1], [0, 1, 0], 0.4)
    bez = BezierCurve(*rng.uniform(-1, 1, (4, 3)))
    arc = Arc([1, 0, 0], [0, 1, 0], [-1, 0, 0])
    assert loss_param(slot, circ) == loss_hybrid(slot.block(CIRCLE), circ.to_array())
    assert loss_param(slot, bez) == loss_seq(slot.block(BEZIER), bez.to_array())
    assert loss_param(slot, arc) == loss_seq(slot.block(ARC), arc.to_array())


def test_param_rejects_no_object():
    with pytest.raises(ValueError):
        loss_param(PredictionSlot.build(), None)


# -- Chamfer ----------------------------------------------------------------


def test_chamfer_single_points(oracle):
    assert chamfer_points([[0, 0, 0]], [[1, 0, 0]]) == oracle["chamfer_single"]


def test_chamfer_empty_set_rejected():
    with pytest.raises(ValueError):
        chamfer_points(np.zeros((0, 3)), [[1, 0, 0]])


@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 2**31))
def test_chamfer_symmetric_and_zero_on_identity(n, m, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(n, 3)), rng.normal(size=(m, 3))
    assert chamfer_points(x, y) == pytest.approx(chamfer_points(y, x), abs=1e-12)
    assert chamfer_points(x, x) == 0.0


def test_chamfer_large_sets_use_tree_path():
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(400, 3)), rng.normal(size=(300, 3))
    d = ((x[:, None] - y[None]) ** 2).sum(-1)
    assert chamfer_points(x, y) == pytest.approx(d.min(1).mean() + d.min(0).mean(), rel=1e-12)


@given(any_curve)
def test_chamfer_curves_zero_at_gt(gt):
    assert loss_chamfer_curves(PredictionSlot.from_curve(gt), gt) == pytest.approx(0.0, abs=1e-24)


def test_chamfer_reversed_line_zero():
    gt = LineSegment([0, 0, 0], [0, 1, 0], 1.5)
    assert loss_chamfer_curves(PredictionSlot.from_curve(reverse(gt)), gt) < 1e-28


def test_chamfer_decreases_along_ray():
    gt = Circle([0, 0, 0], [0, 0, 1], 0.5)
    direction = np.array([0.3, -0.2, 0.1, 0, 0, 0, 0.05])
    values = []
    for s in np.geomspace(1.0, 1e-4, 12):
        slot = PredictionSlot.build(circle=gt.to_array() + s * direction)
        values.append(loss_chamfer_curves(slot, gt))
    assert all(v > 0 for v in values)
    assert all(a > b for a, b in zip(values, values[1:]))


def test_degenerate_predicted_arc_is_jittered_and_counted():
    gt = Arc([1, 0, 0], [0, 1, 0], [-1, 0, 0])
    slot = PredictionSlot.build(arc=[0, 0, 0, 0.5, 0, 0, 1, 0, 0])
    before = losses.stats.degenerate_arcs
    v = loss_chamfer_curves(slot, gt)
    assert np.isfinite(v) and v > 0
    assert losses.stats.degenerate_arcs == before + 1


# -- cross entropy and totals -------------------------------------------------


def test_ce_one_hot_zero():
    w = ClassWeights.uniform()
    assert loss_cross_entropy([0, 0, 1, 0, 0], 2, w) == 0.0


def test_ce_uniform_probs(oracle):
    w = ClassWeights((0.048, 0.403, 0.096, 0.231, 0.222))
    assert loss_cross_entropy([0.2] * 5, 0, w) == pytest.approx(oracle["ce_uniform_w0"], rel=1e-12)
    assert oracle["ce_uniform_w0"] == pytest.approx(0.07725, abs=1e-5)


def test_ce_zero_weight():
    w = ClassWeights((0.0, 0.25, 0.25, 0.25, 0.25))
    assert loss_cross_entropy([0.9, 0.1, 0, 0, 0], 0, w) == 0.0


def test_ce_floors_probability():
    w = ClassWeights.uniform()
    assert loss_cross_entropy([1, 0, 0, 0, 0], 3, w) == pytest.approx(-0.2 * math.log(1e-12))


@pytest.mark.parametrize("probs", [[0.5, 0.5, 0.5, 0, 0], [1.2, -0.2, 0, 0, 0], [0.25] * 4])
def test_ce_rejects_malformed(probs):
    with pytest.raises(ValueError):
        loss_cross_entropy(probs, 0, ClassWeights.uniform())


def test_total_no_object_only_ce():
    slot = PredictionSlot(np.random.default_rng(1).normal(size=40))
    b = loss_total(slot, None, ClassWeights.uniform())
    assert b.param == 0 and b.chamfer == 0 and b.total == b.ce > 0


def test_total_perfect_prediction_zero():
    gt = Circle([0, 0, 0], [0, 0, 1], 0.3)
    logits = np.array([-50, -50, -50, 50, -50.0])
    b = loss_total(PredictionSlot.from_curve(gt, logits), gt, ClassWeights.uniform())
    assert b.total == pytest.approx(0.0, abs=1e-20)


def test_breakdown_total_is_sum():
    rng = np.random.default_rng(2)
    gt = BezierCurve(*rng.uniform(-1, 1, (4, 3)))
    b = loss_total(PredictionSlot(rng.normal(size=40)), gt, ClassWeights.uniform())
    assert b.total == pytest.approx(b.ce + b.param + b.chamfer, abs=1e-12)


def test_scene_loss_normalized_per_object():
    gt = [LineSegment([0, 0, 0], [1, 0, 0], 1.0), Circle([0, 0, 0], [0, 0, 1], 1.0)]
    slots = [PredictionSlot(np.random.default_rng(i).normal(size=40)) for i in range(3)]
    pairs = [(0, gt[0]), (1, gt[1]), (2, None)]
    w = ClassWeights.uniform()
    total = sum(loss_total(slots[j], g, w).total for j, g in pairs)
    assert scene_loss(slots, pairs, w, 2) == pytest.approx(total / 2)
    assert scene_loss(slots, [(2, None)], w, 0) == pytest.approx(loss_total(slots[2], None, w).total)


# -- gradients ----------------------------------------------------------------


def smooth_seq_point(rng, n_points):
    """Random (pred, gt) with every L1 component and the branch margin well away from kinks."""
    while True:
        p = rng.uniform(-1, 1, 3 * n_points)
        g = rng.uniform(-1, 1, 3 * n_points)
        d1 = p.reshape(-1, 3) - g.reshape(-1, 3)
        d2 = p.reshape(-1, 3)[::-1] - g.reshape(-1, 3)
        if min(np.abs(d1).min(), np.abs(d2).min()) > 1e-3 and abs(np.abs(d1).sum() - np.abs(d2).sum()) > 1e-3:
            return p, g


def smooth_hybrid_point(rng):
    while True:
        p, g = rng.uniform(-1, 1, 7), rng.uniform(-1, 1, 7)
        diffs = np.concatenate([p[:6] - g[:6], p[3:6] + g[3:6], [p[6] - g[6]]])
        margin = abs(np.abs(p[3:6] - g[3:6]).sum() - np.abs(p[3:6] + g[3:6]).sum())
        if np.abs(diffs).min() > 1e-3 and margin > 1e-3:
            return p, g


@pytest.mark.parametrize("n_points", [4, 3])
def test_grad_seq_matches_fd(n_points):
    rng = np.random.default_rng(n_points)
    for _ in range(50):
        p, g = smooth_seq_point(rng, n_points)
        fd = fd_grad(lambda x: loss_seq(x, g), p)
        assert np.allclose(grad_seq(p, g), fd, atol=1e-8)


def test_grad_hybrid_matches_fd():
    rng = np.random.default_rng(7)
    for _ in range(50):
        p, g = smooth_hybrid_point(rng)
        fd = fd_grad(lambda x: loss_hybrid(x, g), p)
        assert np.allclose(grad_hybrid(p, g), fd, atol=1e-8)


def test_grad_ce_closed_form():
    rng = np.random.default_rng(9)
    w = compute_class_weights(REFERENCE_COUNTS, 128, 8389)
    for c in range(5):
        z = rng.normal(size=5)
        onehot = np.eye(5)[c]
        assert np.allclose(grad_cross_entropy(z, c, w), w[c] * (softmax(z) - onehot), atol=1e-15)
        fd = fd_grad(lambda x: loss_cross_entropy(softmax(x), c, w), z)
        assert np.allclose(grad_cross_entropy(z, c, w), fd, atol=1e-9)


def test_kink_at_perfect_match_raises():
    g = np.arange(12.0)
    with pytest.raises(NonSmoothPoint):
        grad_seq(g + 0.0, g)
    h = np.array([0, 0, 0, 0, 0, 1.0, 1.0])
    with pytest.raises(NonSmoothPoint):
        grad_hybrid(h, h)


def test_kink_at_branch_tie_raises():
    # palindromic gt: forward and reversed branches tie exactly
    g = np.array([[0, 0, 0], [1, 1, 1], [0, 0, 0]], dtype=float).ravel()
    p = g + 0.3
    with pytest.raises(NonSmoothPoint):
        grad_seq(p, g)
    assert np.array_equal(grad_seq(p, g, on_kink="zero"), np.zeros(9))
    # predicted vector orthogonal-ish so |v - g| == |v + g|
    hp = np.array([0.5, 0.5, 0.5, 1.0, 0, 0, 2.0])
    hg = np.array([0, 0, 0, 0, 1.0, 0, 1.0])
    with pytest.raises(NonSmoothPoint):
        grad_hybrid(hp, hg)
    zeroed = grad_hybrid(hp, hg, on_kink="zero")
    assert np.array_equal(zeroed[3:6], np.zeros(3)) and np.array_equal(zeroed[[0, 1, 2, 6]], [1, 1, 1, 1])


def test_grad_losses_touches_only_logits_and_gt_block():
    rng = np.random.default_rng(11)
    slot = PredictionSlot(rng.normal(size=40))
    slot.project()
    gt = LineSegment([0.1, 0.2, 0.3], [0, 0, 1], 0.9)
    g = grad_losses(slot, gt, ClassWeights.uniform())
    mask = np.zeros(40, dtype=bool)
    mask[LOGITS] = True
    mask[BLOCKS[LINE]] = True
    assert np.all(g[~mask] == 0) and np.any(g[BLOCKS[LINE]] != 0)


def test_grad_losses_no_object_only_logits():
    slot = PredictionSlot(np.random.default_rng(4).normal(size=40))
    g = grad_losses(slot, None, ClassWeights.uniform())
    assert np.all(g[5:] == 0)
    assert np.allclose(g[LOGITS], 0.2 * (slot.probs() - np.eye(5)[0]))


def test_grad_losses_chamfer_term_matches_fd_of_total():
    rng = np.random.default_rng(13)
    gt = BezierCurve(*rng.uniform(-1, 1, (4, 3)))
    w = ClassWeights.uniform()
    while True:
        p, _ = smooth_seq_point(rng, 4)
        if loss_seq(p, gt.to_array()) == np.abs(p - gt.to_array()).sum():
            break
    slot = PredictionSlot.build(bezier=p)
    g = grad_losses(slot, gt, w)

    def total(x):
        s = PredictionSlot.build(bezier=x)
        return loss_param(s, gt) + loss_chamfer_curves(s, gt)

    fd = fd_grad(total, p, h=1e-5)
    assert np.allclose(g[BLOCKS[BEZIER]], fd, rtol=1e-5, atol=1e-7)
