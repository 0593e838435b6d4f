"""Post-processing of predicted curves: Snap & Fit and IoU duplicate filtering.

Both steps rely on the least-squares primitive fitters defined here.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import least_squares

from .curves import (
    ARC, BEZIER, CIRCLE, LINE, Arc, BezierCurve, Circle, LineSegment, ParametricCurve,
    bernstein, bezier_derivative, bezier_length, circle_basis, sample_by_interval, sample_uniform,
)
from .errors import CollinearPoints, DegenerateInput
from .metrics import ScoredCurve
from .spatial import PointIndex, as_points, nearest_distances

log = logging.getLogger(__name__)

_RANK_TOL = 1e-12
# a refined Bezier longer than this multiple of its data polyline has folded back on itself
_MAX_LENGTH_RATIO = 1.5


@dataclass(frozen=True)
class SnapConfig:
    samples_per_curve: int = 64
    max_snap_distance: float = 0.05

    def __post_init__(self):
        if self.samples_per_curve < 4:
            raise ValueError("samples_per_curve must be at least 4")
        if not self.max_snap_distance > 0:
            raise ValueError("max_snap_distance must be positive")


@dataclass(frozen=True)
class IouConfig:
    iou_threshold: float = 0.6
    distance_tolerance: float = 0.01
    samples_per_curve: int = 64

    def __post_init__(self):
        if not 0 < self.iou_threshold <= 1:
            raise ValueError("iou_threshold must lie in (0, 1]")
        if not self.distance_tolerance > 0:
            raise ValueError("distance_tolerance must be positive")


# -- fitters ----------------------------------------------------------------


def _principal_axes(points: np.ndarray):
    centroid = points.mean(axis=0)
    _, s, vt = np.linalg.svd(points - centroid, full_matrices=True)
    return centroid, np.pad(s, (0, 3 - len(s))), vt


def fit_line(points) -> LineSegment:
    """Total-least-squares segment; ``dir`` points from the first input towards the last."""
    p = as_points(points)
    if len(p) < 2:
        raise DegenerateInput("line fit needs at least two points")
    centroid, s, vt = _principal_axes(p)
    if s[0] <= 0:
        raise DegenerateInput("all points coincide")
    d = vt[0]
    if np.dot(p[-1] - p[0], d) < 0:
        d = -d
    t = (p - centroid) @ d
    lo, hi = t.min(), t.max()
    return LineSegment(centroid + 0.5 * (lo + hi) * d, d / np.linalg.norm(d), hi - lo)


def _kasa(xy: np.ndarray):
    a = np.column_stack([2 * xy[:, 0], 2 * xy[:, 1], np.ones(len(xy))])
    rhs = (xy**2).sum(axis=1)
    sol, _, rank, sv = np.linalg.lstsq(a, rhs, rcond=None)
    if rank < 3 or sv[-1] <= _RANK_TOL * sv[0]:
        raise DegenerateInput("circle fit is rank deficient")
    cx, cy, c = sol
    r2 = c + cx**2 + cy**2
    if not r2 > 0:
        raise DegenerateInput("circle fit produced non-positive radius")
    return cx, cy, math.sqrt(r2)


def fit_circle(points) -> Circle:
    """PCA plane followed by an algebraic (Kasa) circle fit in that plane.

    The normal is oriented so the input order runs counter-clockwise.
    """
    p = as_points(points)
    if len(p) < 3:
        raise DegenerateInput("circle fit needs at least three points")
    centroid, s, vt = _principal_axes(p)
    if s[0] <= 0 or s[1] <= 1e-9 * s[0]:
        raise DegenerateInput("points are collinear")
    e1, e2, normal = vt[0], vt[1], vt[2]
    q = p - centroid
    xy = np.column_stack([q @ e1, q @ e2])
    cx, cy, r = _kasa(xy)
    center = centroid + cx * e1 + cy * e2
    rel = p - center
    turning = np.cross(rel[:-1], rel[1:]).sum(axis=0)
    if np.dot(turning, normal) < 0:
        normal = -normal
    return Circle(center, normal / np.linalg.norm(normal), r)


def fit_arc(points) -> Arc:
    """Circle fit, then endpoints from the first/last inputs and the angular midpoint."""
    p = as_points(points)
    circle = fit_circle(p)
    u, v = circle_basis(circle.normal)
    rel = p - circle.center
    theta = np.unwrap(np.arctan2(rel @ v, rel @ u))
    t0, t1 = theta[0], theta[-1]
    if abs(t1 - t0) < 1e-9:
        raise DegenerateInput("arc sweep is zero")
    ang = np.array([t0, 0.5 * (t0 + t1), t1])
    pts = circle.center + circle.radius * (np.cos(ang)[:, None] * u + np.sin(ang)[:, None] * v)
    try:
        return Arc(*pts)
    except CollinearPoints as exc:
        raise DegenerateInput(str(exc)) from exc


def _chord_params(p: np.ndarray, power: float = 1.0) -> np.ndarray:
    seg = np.linalg.norm(np.diff(p, axis=0), axis=1) ** power
    total = seg.sum()
    if total <= 0:
        raise DegenerateInput("all points coincide")
    return np.concatenate([[0.0], np.cumsum(seg)]) / total


def _solve_control_points(p, t):
    a = bernstein(t)
    ctrl, _, rank, sv = np.linalg.lstsq(a, p, rcond=None)
    if rank < 4 or sv[-1] <= _RANK_TOL * sv[0]:
        raise DegenerateInput("Bezier fit is rank deficient")
    return ctrl


def _refine_bezier(p: np.ndarray, t: np.ndarray):
    """Gauss-Newton over control points and interior parameters jointly."""
    n = len(p)
    inner = slice(1, n - 1)
    rows = np.arange(1, n - 1)

    def unpack(x):
        return x[:12].reshape(4, 3), np.concatenate([[0.0], x[12:], [1.0]])

    def residual(x):
        c, tt = unpack(x)
        return (bernstein(tt) @ c - p).ravel()

    def jac(x):
        c, tt = unpack(x)
        b = bernstein(tt)
        j = np.zeros((3 * n, 12 + n - 2))
        for k in range(4):
            for d in range(3):
                j[d::3, 3 * k + d] = b[:, k]
        dp = bezier_derivative(c, tt[inner])
        for d in range(3):
            j[3 * rows + d, 12 + rows - 1] = dp[:, d]
        return j

    ctrl = _solve_control_points(p, t)
    x0 = np.concatenate([ctrl.ravel(), t[inner]])
    sol = least_squares(residual, x0, jac=jac, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=400)
    t = np.concatenate([[0.0], np.clip(sol.x[12:], 0.0, 1.0), [1.0]])
    return _solve_control_points(p, t), t


def _rms(p, ctrl, t) -> float:
    return float(np.sqrt(np.mean(np.sum((bernstein(t) @ ctrl - p) ** 2, axis=1))))


def fit_bezier(points, return_rms: bool = False):
    """Least-squares cubic Bézier through ordered points.

    The linear fit under a chord-length parameterization seeds a joint
    Gauss-Newton refinement of control points and interior parameters, so
    exact samples of a cubic are recovered with zero residual. Centripetal
    and uniform parameterizations are tried as extra seeds and the lowest
    residual wins. The first and last inputs stay pinned at t = 0 and 1.
    On noisy input a refinement can fold into a cusp; refinements much longer
    than the input polyline are discarded in favour of the linear fit.
    """
    p = as_points(points)
    if len(p) < 4:
        raise DegenerateInput("Bezier fit needs at least four points")
    n = len(p)
    polyline = float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum())
    best = None
    for t0 in (_chord_params(p), _chord_params(p, 0.5), np.linspace(0.0, 1.0, n)):
        ctrl, t = _solve_control_points(p, t0), t0
        if n >= 5:
            rc, rt = _refine_bezier(p, t0)
            if bezier_length(rc) <= _MAX_LENGTH_RATIO * polyline:
                ctrl, t = rc, rt
        err = _rms(p, ctrl, t)
        if best is None or err < best[0] - 1e-15:
            best = (err, ctrl, t)
        if err < 1e-13:
            break
    err, ctrl, _ = best
    curve = BezierCurve(*ctrl)
    return (curve, err) if return_rms else curve


FITTERS = {LINE: fit_line, CIRCLE: fit_circle, ARC: fit_arc, BEZIER: fit_bezier}


# -- Snap & Fit -------------------------------------------------------------


class SnapResult(NamedTuple):
    curve: ParametricCurve
    snapped: int
    degenerate: bool


def snap_and_fit(curve: ParametricCurve, cloud, cfg: SnapConfig = SnapConfig()) -> SnapResult:
    """Pull curve samples onto their nearest cloud points and refit the primitive.

    ``cloud`` is an (N, 3) array or a prebuilt :class:`PointIndex`. Samples
    with no cloud point within ``cfg.max_snap_distance`` stay in place. If the
    refit is degenerate the input curve is returned with ``degenerate=True``;
    a refit lying farther from the cloud than the input is also rejected.
    """
    index = cloud if isinstance(cloud, PointIndex) else PointIndex(cloud)
    samples = sample_uniform(curve, cfg.samples_per_curve)
    dist, idx = index.query(samples, cfg.max_snap_distance)
    hit = np.isfinite(dist)
    if not hit.any():
        return SnapResult(curve, 0, False)
    moved = samples.copy()
    moved[hit] = index.points[idx[hit]]
    try:
        refit = FITTERS[curve.cls](moved)
    except DegenerateInput as exc:
        log.warning("snap refit degenerate, keeping original %s curve: %s", type(curve).__name__, exc)
        return SnapResult(curve, int(hit.sum()), True)
    before = index.query(samples)[0].mean()
    after = index.query(sample_uniform(refit, cfg.samples_per_curve))[0].mean()
    if after > before:
        return SnapResult(curve, int(hit.sum()), False)
    return SnapResult(refit, int(hit.sum()), False)


# -- IoU filter -------------------------------------------------------------


def curve_iou(a: ParametricCurve, b: ParametricCurve, cfg: IouConfig = IouConfig()) -> float:
    """Fraction of both curves' samples lying within tolerance of the other curve."""
    sa = sample_uniform(a, cfg.samples_per_curve)
    sb = sample_uniform(b, cfg.samples_per_curve)
    # dense references keep the discretization error below tolerance / 4
    ra = sample_by_interval(a, cfg.distance_tolerance / 2)
    rb = sample_by_interval(b, cfg.distance_tolerance / 2)
    over_a = np.count_nonzero(nearest_distances(sa, rb) <= cfg.distance_tolerance)
    over_b = np.count_nonzero(nearest_distances(sb, ra) <= cfg.distance_tolerance)
    return (over_a + over_b) / (len(sa) + len(sb))


def iou_filter(curves: Sequence[ScoredCurve], cfg: IouConfig = IouConfig()) -> list[ScoredCurve]:
    """Drop same-class curves overlapping a higher-confidence survivor.

    Output keeps the input order.
    """
    order = sorted(range(len(curves)), key=lambda k: -curves[k].confidence)
    kept: list[int] = []
    for k in order:
        c = curves[k]
        if any(curves[j].cls == c.cls and curve_iou(curves[j].curve, c.curve, cfg) > cfg.iou_threshold for j in kept):
            continue
        kept.append(k)
    return [curves[k] for k in sorted(kept)]
