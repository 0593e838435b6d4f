"""Parametric 3D curve primitives: Bézier, line segment, circle and arc.

All curve values are immutable. Coordinates are stored as read-only
float64 arrays so curves can be shared freely between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import ClassVar, Sequence, Union

import numpy as np

from .errors import CollinearPoints, ZeroExtent

NO_OBJECT = 0
BEZIER = 1
LINE = 2
CIRCLE = 3
ARC = 4
CURVE_CLASSES = (BEZIER, LINE, CIRCLE, ARC)
CLASS_NAMES = {NO_OBJECT: "no_object", BEZIER: "bezier", LINE: "line", CIRCLE: "circle", ARC: "arc"}
CLASS_IDS = {name: cls for cls, name in CLASS_NAMES.items()}

UNIT_TOL = 1e-9
# arc degeneracy thresholds (scale invariant)
MAX_RADIUS_TO_CHORD = 1e6
MIN_AREA_RATIO = 1e-9


def _point(x) -> np.ndarray:
    a = np.array(x, dtype=float).reshape(3)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite coordinate in {a.tolist()}")
    a.setflags(write=False)
    return a


def _unit(x, what: str) -> np.ndarray:
    a = _point(x)
    if abs(np.linalg.norm(a) - 1.0) > UNIT_TOL:
        raise ValueError(f"{what} must be a unit vector, got norm {float(np.linalg.norm(a)):.12g}")
    return a


def _positive(x, what: str) -> float:
    v = float(x)
    if not (math.isfinite(v) and v > 0):
        raise ValueError(f"{what} must be positive and finite, got {v!r}")
    return v


@dataclass(frozen=True, eq=False)
class BezierCurve:
    b_s: np.ndarray
    b_c1: np.ndarray
    b_c2: np.ndarray
    b_e: np.ndarray

    cls: ClassVar[int] = BEZIER

    def __post_init__(self):
        for name in ("b_s", "b_c1", "b_c2", "b_e"):
            object.__setattr__(self, name, _point(getattr(self, name)))

    @property
    def control_points(self) -> np.ndarray:
        return np.stack([self.b_s, self.b_c1, self.b_c2, self.b_e])

    def to_array(self) -> np.ndarray:
        return self.control_points.ravel()

    @classmethod
    def from_array(cls, a) -> "BezierCurve":
        p = np.asarray(a, dtype=float).reshape(4, 3)
        return cls(*p)


@dataclass(frozen=True, eq=False)
class LineSegment:
    mid: np.ndarray
    dir: np.ndarray
    length: float

    cls: ClassVar[int] = LINE

    def __post_init__(self):
        object.__setattr__(self, "mid", _point(self.mid))
        object.__setattr__(self, "dir", _unit(self.dir, "line direction"))
        object.__setattr__(self, "length", _positive(self.length, "line length"))

    @classmethod
    def from_endpoints(cls, a, b) -> "LineSegment":
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        d = b - a
        n = np.linalg.norm(d)
        return cls((a + b) / 2, d / n, n)

    @property
    def start(self) -> np.ndarray:
        return self.mid - 0.5 * self.length * self.dir

    @property
    def end(self) -> np.ndarray:
        return self.mid + 0.5 * self.length * self.dir

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.mid, self.dir, [self.length]])

    @classmethod
    def from_array(cls, a) -> "LineSegment":
        a = np.asarray(a, dtype=float)
        return cls(a[0:3], a[3:6], a[6])


@dataclass(frozen=True, eq=False)
class Circle:
    center: np.ndarray
    normal: np.ndarray
    radius: float

    cls: ClassVar[int] = CIRCLE

    def __post_init__(self):
        object.__setattr__(self, "center", _point(self.center))
        object.__setattr__(self, "normal", _unit(self.normal, "circle normal"))
        object.__setattr__(self, "radius", _positive(self.radius, "circle radius"))

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.center, self.normal, [self.radius]])

    @classmethod
    def from_array(cls, a) -> "Circle":
        a = np.asarray(a, dtype=float)
        return cls(a[0:3], a[3:6], a[6])


@dataclass(frozen=True)
class DerivedArc:
    """Center/normal/angle form of a three-point arc.

    Points on the arc are ``center + radius * (cos(t) * u + sin(t) * v)``
    for ``t`` in ``[angle_start, angle_end]``; ``(u, v, normal)`` is
    right-handed and the sweep is counter-clockwise about ``normal``.
    """

    center: np.ndarray
    normal: np.ndarray
    radius: float
    angle_start: float
    angle_end: float
    u: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)

    @property
    def sweep(self) -> float:
        return self.angle_end - self.angle_start

    def point_at(self, angles) -> np.ndarray:
        t = np.asarray(angles, dtype=float)[..., None]
        return self.center + self.radius * (np.cos(t) * self.u + np.sin(t) * self.v)


@dataclass(frozen=True, eq=False)
class Arc:
    p_s: np.ndarray
    p_m: np.ndarray
    p_e: np.ndarray

    cls: ClassVar[int] = ARC

    def __post_init__(self):
        for name in ("p_s", "p_m", "p_e"):
            object.__setattr__(self, name, _point(getattr(self, name)))
        # validates non-collinearity eagerly
        self.derived

    @cached_property
    def derived(self) -> DerivedArc:
        return arc_from_three_points(self.p_s, self.p_m, self.p_e)

    @property
    def points(self) -> np.ndarray:
        return np.stack([self.p_s, self.p_m, self.p_e])

    def to_array(self) -> np.ndarray:
        return self.points.ravel()

    @classmethod
    def from_array(cls, a) -> "Arc":
        p = np.asarray(a, dtype=float).reshape(3, 3)
        return cls(*p)


ParametricCurve = Union[BezierCurve, LineSegment, Circle, Arc]
CURVE_TYPES = {BEZIER: BezierCurve, LINE: LineSegment, CIRCLE: Circle, ARC: Arc}
PARAM_SIZES = {BEZIER: 12, LINE: 7, CIRCLE: 7, ARC: 9}


def curve_from_array(cls: int, a) -> ParametricCurve:
    return CURVE_TYPES[cls].from_array(a)


def curves_close(a: ParametricCurve, b: ParametricCurve, atol: float = 1e-9) -> bool:
    """Exact parameter comparison (no sign or order ambiguity)."""
    return a.cls == b.cls and np.allclose(a.to_array(), b.to_array(), rtol=0, atol=atol)


def reverse(curve: ParametricCurve) -> ParametricCurve:
    if isinstance(curve, BezierCurve):
        return BezierCurve(curve.b_e, curve.b_c2, curve.b_c1, curve.b_s)
    if isinstance(curve, LineSegment):
        return LineSegment(curve.mid, -curve.dir, curve.length)
    if isinstance(curve, Circle):
        return Circle(curve.center, -curve.normal, curve.radius)
    if isinstance(curve, Arc):
        return Arc(curve.p_e, curve.p_m, curve.p_s)
    raise TypeError(f"not a curve: {curve!r}")


def circle_basis(normal) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic in-plane frame ``(u, v)`` with ``u x v = normal``."""
    n = np.asarray(normal, dtype=float)
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(n)))] = 1.0
    u = axis - axis.dot(n) * n
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    return u, v


def arc_from_three_points(p_s, p_m, p_e) -> DerivedArc:
    """Circumcircle of three points, oriented so that p_s -> p_m -> p_e is CCW."""
    p_s = np.asarray(p_s, dtype=float)
    p_m = np.asarray(p_m, dtype=float)
    p_e = np.asarray(p_e, dtype=float)
    a = p_s - p_m
    b = p_e - p_m
    la, lb, lc = np.linalg.norm(a), np.linalg.norm(b), np.linalg.norm(p_e - p_s)
    axb = np.cross(a, b)
    area2 = np.linalg.norm(axb)
    edges = la * lb * lc
    if edges == 0.0 or area2 < MIN_AREA_RATIO * edges:
        raise CollinearPoints(f"arc points are collinear or coincident: {p_s}, {p_m}, {p_e}")
    radius_est = edges / (2.0 * area2)
    if radius_est > MAX_RADIUS_TO_CHORD * max(la, lb, lc):
        raise CollinearPoints(f"arc circumradius {radius_est:.3g} is ill-conditioned")
    center = p_m + np.cross(la**2 * b - lb**2 * a, axb) / (2.0 * area2**2)
    # (p_m - p_s) x (p_e - p_m) orients the traversal counter-clockwise
    normal = -axb / area2
    u, v = circle_basis(normal)
    radius = float(np.mean([np.linalg.norm(p - center) for p in (p_s, p_m, p_e)]))

    def angle(p):
        d = p - center
        return math.atan2(d.dot(v), d.dot(u))

    t0 = angle(p_s)
    t1 = angle(p_e)
    while t1 <= t0:
        t1 += 2 * math.pi
    for x in (center, normal, u, v):
        x.setflags(write=False)
    return DerivedArc(center, normal, radius, t0, t1, u, v)


# -- Bézier helpers ---------------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_BEZIER_TABLE_SEGMENTS = 128


def bernstein(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)[..., None]
    s = 1.0 - t
    return np.concatenate([s**3, 3 * s**2 * t, 3 * s * t**2, t**3], axis=-1)


def bezier_eval(ctrl: np.ndarray, t) -> np.ndarray:
    return bernstein(t) @ np.asarray(ctrl, dtype=float)


def bezier_derivative(ctrl: np.ndarray, t) -> np.ndarray:
    ctrl = np.asarray(ctrl, dtype=float)
    t = np.asarray(t, dtype=float)[..., None]
    s = 1.0 - t
    d = np.diff(ctrl, axis=0)
    return 3 * (s**2 * d[0] + 2 * s * t * d[1] + t**2 * d[2])


def _speed(ctrl, t):
    return np.linalg.norm(bezier_derivative(ctrl, t), axis=-1)


def _gauss(ctrl, a, b):
    """8-point Gauss-Legendre integral of the speed over [a, b] (vectorized)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    half = 0.5 * (b - a)
    t = (0.5 * (a + b))[..., None] + half[..., None] * _GL_X
    return half * (_speed(ctrl, t) @ _GL_W)


def _adaptive_length(ctrl, a, b, whole, tol, depth=0):
    m = 0.5 * (a + b)
    left = float(_gauss(ctrl, a, m))
    right = float(_gauss(ctrl, m, b))
    total = left + right
    if depth >= 40 or abs(total - whole) <= tol * max(abs(total), 1e-300):
        return total
    return _adaptive_length(ctrl, a, m, left, tol, depth + 1) + _adaptive_length(
        ctrl, m, b, right, tol, depth + 1
    )


def bezier_length(ctrl, t0: float = 0.0, t1: float = 1.0, tol: float = 1e-7) -> float:
    ctrl = np.asarray(ctrl, dtype=float)
    whole = float(_gauss(ctrl, t0, t1))
    return _adaptive_length(ctrl, t0, t1, whole, tol)


def _bezier_arclength_params(ctrl: np.ndarray, fractions: np.ndarray) -> np.ndarray:
    """Parameters t at which the arc length equals ``fractions * total``."""
    knots = np.linspace(0.0, 1.0, _BEZIER_TABLE_SEGMENTS + 1)
    seg = np.array([bezier_length(ctrl, knots[i], knots[i + 1]) for i in range(_BEZIER_TABLE_SEGMENTS)])
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0.0:
        return np.asarray(fractions, dtype=float).copy()
    target = np.asarray(fractions, dtype=float) * total
    k = np.clip(np.searchsorted(cum, target, side="right") - 1, 0, _BEZIER_TABLE_SEGMENTS - 1)
    lo = knots[k].copy()
    hi = knots[k + 1].copy()
    base = cum[k]
    t = lo + (hi - lo) * np.where(seg[k] > 0, (target - base) / np.where(seg[k] > 0, seg[k], 1), 0.5)
    for _ in range(50):
        f = base + _gauss(ctrl, knots[k], t) - target
        sp = _speed(ctrl, t)
        lo = np.where(f < 0, t, lo)
        hi = np.where(f > 0, t, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(sp > 0, t - f / sp, np.inf)
        t_new = np.where((step > lo) & (step < hi), step, 0.5 * (lo + hi))
        if np.max(np.abs(t_new - t)) < 1e-15:
            t = t_new
            break
        t = t_new
    t[fractions <= 0] = 0.0
    t[fractions >= 1] = 1.0
    return t


# -- lengths and sampling ---------------------------------------------------


def curve_length(curve: ParametricCurve) -> float:
    if isinstance(curve, LineSegment):
        return curve.length
    if isinstance(curve, Circle):
        return 2 * math.pi * curve.radius
    if isinstance(curve, Arc):
        d = curve.derived
        return d.radius * abs(d.sweep)
    if isinstance(curve, BezierCurve):
        return bezier_length(curve.control_points)
    raise TypeError(f"not a curve: {curve!r}")


def is_closed(curve: ParametricCurve) -> bool:
    return isinstance(curve, Circle)


def _circle_points(center, normal, radius, n: int) -> np.ndarray:
    u, v = circle_basis(normal)
    t = 2 * math.pi * np.arange(n) / n
    return center + radius * (np.cos(t)[:, None] * u + np.sin(t)[:, None] * v)


def _sample_fractions(curve: ParametricCurve, fractions: np.ndarray, by_length: bool) -> np.ndarray:
    if isinstance(curve, LineSegment):
        return curve.start + (fractions * curve.length)[:, None] * curve.dir
    if isinstance(curve, Arc):
        d = curve.derived
        pts = d.point_at(d.angle_start + fractions * d.sweep)
        pts[0] = curve.p_s
        pts[-1] = curve.p_e
        return pts
    if isinstance(curve, BezierCurve):
        ctrl = curve.control_points
        t = _bezier_arclength_params(ctrl, fractions) if by_length else fractions
        pts = bezier_eval(ctrl, t)
        pts[0] = curve.b_s
        pts[-1] = curve.b_e
        return pts
    raise TypeError(f"not an open curve: {curve!r}")


def sample_uniform(curve: ParametricCurve, count: int) -> np.ndarray:
    """``count`` points at uniform parameter spacing, ordered along the curve."""
    if count < 2:
        raise ValueError("count must be at least 2")
    if isinstance(curve, Circle):
        return _circle_points(curve.center, curve.normal, curve.radius, count)
    return _sample_fractions(curve, np.linspace(0.0, 1.0, count), by_length=False)


def interval_count(length: float, interval: float, closed: bool = False) -> int:
    # tolerate representation error in length/interval (e.g. 1.1 / 0.1)
    n = math.ceil(length / interval - 1e-9)
    if closed:
        return max(n, 3)
    return max(2, n + 1)


def sample_by_interval(curve: ParametricCurve, interval: float) -> np.ndarray:
    """Points spaced uniformly by arc length, no further apart than ``interval``."""
    if not interval > 0:
        raise ValueError("interval must be positive")
    length = curve_length(curve)
    if isinstance(curve, Circle):
        n = interval_count(length, interval, closed=True)
        return _circle_points(curve.center, curve.normal, curve.radius, n)
    n = interval_count(length, interval)
    return _sample_fractions(curve, np.linspace(0.0, 1.0, n), by_length=True)


# -- rigid/similarity transforms ------------------------------------------


def transform_curve(curve: ParametricCurve, rotation=None, scale: float = 1.0, offset=None) -> ParametricCurve:
    """Apply ``x -> scale * R x + offset`` to a curve.

    Direction vectors are rotated only; lengths and radii are scaled.
    """
    R = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)
    t = np.zeros(3) if offset is None else np.asarray(offset, dtype=float)

    def pt(p):
        return scale * (R @ p) + t

    def vec(x):
        y = R @ x
        return y / np.linalg.norm(y)

    if isinstance(curve, BezierCurve):
        return BezierCurve(*(pt(p) for p in curve.control_points))
    if isinstance(curve, LineSegment):
        return LineSegment(pt(curve.mid), vec(curve.dir), curve.length * scale)
    if isinstance(curve, Circle):
        return Circle(pt(curve.center), vec(curve.normal), curve.radius * scale)
    if isinstance(curve, Arc):
        return Arc(*(pt(p) for p in curve.points))
    raise TypeError(f"not a curve: {curve!r}")


@dataclass(frozen=True)
class NormalizationTransform:
    """``x_normalized = (x - center) * scale``."""

    center: tuple[float, float, float]
    scale: float

    def apply_points(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=float) - np.asarray(self.center)) * self.scale

    def apply_curve(self, curve: ParametricCurve) -> ParametricCurve:
        c = np.asarray(self.center)
        return transform_curve(curve, scale=self.scale, offset=-c * self.scale)

    def invert_points(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) / self.scale + np.asarray(self.center)


def normalize_scene(
    points, curves: Sequence[ParametricCurve] = ()
) -> tuple[np.ndarray, list[ParametricCurve], NormalizationTransform]:
    """Center the cloud's bounding box at 0 and scale its longest side to 2."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
        raise ValueError("points must be a nonempty (N, 3) array")
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = float(np.max(hi - lo))
    if span <= 0.0:
        raise ZeroExtent("point cloud has zero extent")
    tr = NormalizationTransform(tuple(float(x) for x in (lo + hi) / 2), 2.0 / span)
    return tr.apply_points(pts), [tr.apply_curve(c) for c in curves], tr
