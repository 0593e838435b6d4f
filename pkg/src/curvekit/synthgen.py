"""Synthetic CAD-like scenes with analytically known edge curves.

Each solid is sampled uniformly by surface area; its ground-truth curves
are the B-rep edges (sharp creases and fillet boundaries) expressed as
lines, circles, arcs and cubic Béziers. Scenes come out normalized so the
longest axis-aligned span of the cloud is 2, centered at the origin.

Random streams: every operation draws from its own PCG64 generator seeded
with ``SeedSequence([seed, stream_id])`` (see ``STREAMS``), so generation,
noise, subsampling and augmentation are reproducible independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from matplotlib.path import Path

from .curves import (
    Arc, BezierCurve, Circle, LineSegment, NormalizationTransform, ParametricCurve,
    _bezier_arclength_params, bezier_eval, bezier_length, normalize_scene, transform_curve,
)

STREAMS = {"surface": 1, "noise": 2, "subsample": 3, "augment": 4, "init": 5}
SOLID_KINDS = ("box", "cylinder", "wedge", "rounded-slab", "composite")
DEFAULT_DIMS = {
    "box": (2.0, 1.2, 0.8),                    # dx, dy, dz
    "cylinder": (0.5, 1.5),                    # radius, height
    "wedge": (2.0, 1.2, 0.6, 0.3),             # width, depth, thickness, fillet radius
    "rounded-slab": (2.0, 1.0, 0.3, 0.25, 0.3),  # width, depth, thickness, corner radius, bulge
    "composite": (2.0, 1.5, 0.6, 0.4, 0.5),    # dx, dy, dz, boss radius, boss height
}
MAX_CURVES = 100
NOISE_LEVELS = (1 / 1000, 1 / 500, 1 / 200)
DENSITIES = (32768, 16384, 8192, 4096)
DROPOUT_PROBABILITY = 0.85
MIN_KEEP_FRACTION = 0.2


def rng_for(seed: int, stream: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), STREAMS[stream]])))


@dataclass(frozen=True)
class SceneSpec:
    kind: str
    dims: Optional[tuple] = None
    n_points: int = 32768
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SOLID_KINDS:
            raise ValueError(f"unknown solid kind {self.kind!r}; expected one of {SOLID_KINDS}")
        dims = DEFAULT_DIMS[self.kind] if self.dims is None else tuple(float(d) for d in self.dims)
        if len(dims) != len(DEFAULT_DIMS[self.kind]):
            raise ValueError(f"{self.kind} takes {len(DEFAULT_DIMS[self.kind])} dimensions, got {len(dims)}")
        if any(not (math.isfinite(d) and d > 0) for d in dims):
            raise ValueError(f"dimensions must be positive, got {dims}")
        if self.n_points < 16:
            raise ValueError("n_points must be at least 16")
        object.__setattr__(self, "dims", dims)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dims": list(self.dims), "n_points": self.n_points, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        return cls(d["kind"], tuple(d["dims"]), int(d["n_points"]), int(d["seed"]))


@dataclass
class Scene:
    points: np.ndarray
    curves: list
    spec: Optional[SceneSpec] = None
    transform: Optional[NormalizationTransform] = None
    provenance: dict = field(default_factory=dict)


# -- surface patches --------------------------------------------------------


class _Patch:
    area: float

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


class _Parallelogram(_Patch):
    def __init__(self, origin, e1, e2, hole=None):
        self.origin = np.asarray(origin, float)
        self.e1 = np.asarray(e1, float)
        self.e2 = np.asarray(e2, float)
        # optional circular hole (center, radius) lying in the patch plane
        self.hole = hole
        self.area = float(np.linalg.norm(np.cross(self.e1, self.e2)))
        if hole is not None:
            self.area -= math.pi * hole[1] ** 2

    def sample(self, n, rng):
        out = np.zeros((0, 3))
        while len(out) < n:
            m = max(n - len(out), 16) * (2 if self.hole is not None else 1)
            uv = rng.random((m, 2))
            p = self.origin + uv[:, :1] * self.e1 + uv[:, 1:] * self.e2
            if self.hole is not None:
                p = p[np.linalg.norm(p - self.hole[0], axis=1) > self.hole[1]]
            out = np.vstack([out, p])
        return out[:n]


class _Disc(_Patch):
    def __init__(self, center, radius):
        self.center = np.asarray(center, float)
        self.radius = radius
        self.area = math.pi * radius**2

    def sample(self, n, rng):
        r = self.radius * np.sqrt(rng.random(n))
        t = 2 * math.pi * rng.random(n)
        return self.center + np.column_stack([r * np.cos(t), r * np.sin(t), np.zeros(n)])


class _CylinderWall(_Patch):
    def __init__(self, base_center, radius, height):
        self.base = np.asarray(base_center, float)
        self.radius = radius
        self.height = height
        self.area = 2 * math.pi * radius * height

    def sample(self, n, rng):
        t = 2 * math.pi * rng.random(n)
        h = self.height * rng.random(n)
        return self.base + np.column_stack([self.radius * np.cos(t), self.radius * np.sin(t), h])


# -- 2D profiles for extruded solids ----------------------------------------


@dataclass
class _Seg:
    kind: str  # "line" | "arc" | "bezier"
    data: tuple

    def length(self) -> float:
        if self.kind == "line":
            return float(np.linalg.norm(self.data[1] - self.data[0]))
        if self.kind == "arc":
            _, r, a0, a1 = self.data
            return abs(a1 - a0) * r
        return bezier_length(self._ctrl3(0.0))

    def _ctrl3(self, z):
        return np.column_stack([np.asarray(self.data), np.full(4, z)])

    def points_at(self, f: np.ndarray) -> np.ndarray:
        """2D points at arc-length fractions ``f``."""
        if self.kind == "line":
            p0, p1 = self.data
            return p0 + f[:, None] * (p1 - p0)
        if self.kind == "arc":
            c, r, a0, a1 = self.data
            a = a0 + f * (a1 - a0)
            return c + r * np.column_stack([np.cos(a), np.sin(a)])
        ctrl = self._ctrl3(0.0)
        t = _bezier_arclength_params(ctrl, np.asarray(f, float))
        return bezier_eval(ctrl, t)[:, :2]

    def curve(self, z: float) -> ParametricCurve:
        def lift(p):
            return np.array([p[0], p[1], z])

        if self.kind == "line":
            return LineSegment.from_endpoints(lift(self.data[0]), lift(self.data[1]))
        if self.kind == "arc":
            c, r, a0, a1 = self.data
            pts = [lift(c + r * np.array([math.cos(a), math.sin(a)])) for a in (a0, 0.5 * (a0 + a1), a1)]
            return Arc(*pts)
        return BezierCurve(*self._ctrl3(z))

    @property
    def start(self):
        return self.points_at(np.array([0.0]))[0] if self.kind != "line" else self.data[0]


def _fillet(prev_pt, vertex, next_pt, radius):
    d1 = prev_pt - vertex
    d2 = next_pt - vertex
    d1 = d1 / np.linalg.norm(d1)
    d2 = d2 / np.linalg.norm(d2)
    half = 0.5 * math.acos(np.clip(d1 @ d2, -1.0, 1.0))
    tangent = radius / math.tan(half)
    t1 = vertex + tangent * d1
    t2 = vertex + tangent * d2
    bis = d1 + d2
    center = vertex + (radius / math.sin(half)) * bis / np.linalg.norm(bis)
    a0 = math.atan2(*(t1 - center)[::-1])
    a1 = math.atan2(*(t2 - center)[::-1])
    while a1 <= a0:
        a1 += 2 * math.pi
    return t1, t2, _Seg("arc", (center, radius, a0, a1)), tangent


def _filleted_polygon(vertices: Sequence, radii: Sequence[float]) -> list[_Seg]:
    """CCW polygon with the given fillet radius at each vertex (0 = sharp)."""
    v = [np.asarray(p, float) for p in vertices]
    n = len(v)
    ends = []
    for i in range(n):
        if radii[i] > 0:
            t1, t2, arc, tangent = _fillet(v[i - 1], v[i], v[(i + 1) % n], radii[i])
            limit = min(np.linalg.norm(v[i - 1] - v[i]), np.linalg.norm(v[(i + 1) % n] - v[i]))
            if tangent >= limit:
                raise ValueError(f"fillet radius {radii[i]} too large for its corner")
            ends.append((t1, t2, arc))
        else:
            ends.append((v[i], v[i], None))
    segs = []
    for i in range(n):
        t1, t2, arc = ends[i]
        if arc is not None:
            segs.append(arc)
        nxt = ends[(i + 1) % n][0]
        segs.append(_Seg("line", (t2, nxt)))
    return segs


class _Extrusion:
    """Prism over a closed 2D profile, z in [-t/2, t/2]."""

    def __init__(self, segments: list[_Seg], thickness: float):
        self.segments = segments
        self.t = thickness
        dense = np.vstack([s.points_at(np.linspace(0, 1, 512, endpoint=False)) for s in segments])
        self.outline = Path(np.vstack([dense, dense[:1]]), closed=True)
        x, y = dense[:, 0], dense[:, 1]
        self.cap_area = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
        self.lo = dense.min(axis=0)
        self.hi = dense.max(axis=0)

    def patches(self) -> list:
        out = [_ProfileCap(self, -self.t / 2), _ProfileCap(self, self.t / 2)]
        out += [_ProfileWall(s, self.t) for s in self.segments]
        return out

    def curves(self) -> list:
        c = []
        for z in (-self.t / 2, self.t / 2):
            c += [s.curve(z) for s in self.segments]
        for s in self.segments:
            p = s.start
            c.append(LineSegment.from_endpoints([p[0], p[1], -self.t / 2], [p[0], p[1], self.t / 2]))
        return c


class _ProfileCap(_Patch):
    def __init__(self, ext: _Extrusion, z: float):
        self.ext = ext
        self.z = z
        self.area = ext.cap_area

    def sample(self, n, rng):
        e = self.ext
        out = np.zeros((0, 2))
        while len(out) < n:
            m = 2 * max(n - len(out), 16)
            xy = e.lo + rng.random((m, 2)) * (e.hi - e.lo)
            out = np.vstack([out, xy[e.outline.contains_points(xy)]])
        out = out[:n]
        return np.column_stack([out, np.full(n, self.z)])


class _ProfileWall(_Patch):
    def __init__(self, seg: _Seg, thickness: float):
        self.seg = seg
        self.t = thickness
        self.area = seg.length() * thickness

    def sample(self, n, rng):
        f = rng.random(n)
        h = rng.random(n)
        xy = self.seg.points_at(f)
        return np.column_stack([xy, (h - 0.5) * self.t])


# -- solids -----------------------------------------------------------------


def _box_patches(dx, dy, dz, top_hole=None):
    o = np.array([-dx / 2, -dy / 2, -dz / 2])
    ex, ey, ez = np.array([dx, 0, 0.0]), np.array([0, dy, 0.0]), np.array([0, 0, dz])
    return [
        _Parallelogram(o, ex, ey),
        _Parallelogram(o + ez, ex, ey, hole=top_hole),
        _Parallelogram(o, ex, ez),
        _Parallelogram(o + ey, ex, ez),
        _Parallelogram(o, ey, ez),
        _Parallelogram(o + ex, ey, ez),
    ]


def _box_edges(dx, dy, dz):
    h = np.array([dx, dy, dz]) / 2
    edges = []
    for axis in range(3):
        others = [a for a in range(3) if a != axis]
        for s1 in (-1, 1):
            for s2 in (-1, 1):
                a = np.zeros(3)
                a[others[0]] = s1 * h[others[0]]
                a[others[1]] = s2 * h[others[1]]
                b = a.copy()
                a[axis] = -h[axis]
                b[axis] = h[axis]
                edges.append(LineSegment.from_endpoints(a, b))
    return edges


def _solid(spec: SceneSpec):
    d = spec.dims
    if spec.kind == "box":
        return _box_patches(*d), _box_edges(*d)
    if spec.kind == "cylinder":
        r, h = d
        patches = [_CylinderWall([0, 0, -h / 2], r, h), _Disc([0, 0, -h / 2], r), _Disc([0, 0, h / 2], r)]
        z = np.array([0.0, 0.0, 1.0])
        return patches, [Circle([0, 0, -h / 2], z, r), Circle([0, 0, h / 2], z, r)]
    if spec.kind == "wedge":
        w, l, t, rho = d
        segs = _filleted_polygon([(0, 0), (w, 0), (0, l)], [0.0, rho, 0.0])
        ext = _Extrusion(segs, t)
        return ext.patches(), ext.curves()
    if spec.kind == "rounded-slab":
        w, l, t, rho, bulge = d
        if 2 * rho >= l or rho >= w:
            raise ValueError("corner radius too large for slab")
        poly = _filleted_polygon([(0, 0), (w, 0), (w, l), (0, l)], [0.0, rho, rho, 0.0])
        # replace the closing left side with an outward cubic bulge
        left = poly.pop()
        p0, p1 = left.data
        c1 = p0 + (p1 - p0) / 3 + np.array([-bulge, 0.0])
        c2 = p0 + 2 * (p1 - p0) / 3 + np.array([-bulge, 0.0])
        poly.append(_Seg("bezier", (p0, c1, c2, p1)))
        ext = _Extrusion(poly, t)
        return ext.patches(), ext.curves()
    if spec.kind == "composite":
        dx, dy, dz, r, hb = d
        if 2 * r >= min(dx, dy):
            raise ValueError("boss radius does not fit on the box top")
        top = np.array([0.0, 0.0, dz / 2])
        patches = _box_patches(dx, dy, dz, top_hole=(top, r))
        patches += [_CylinderWall(top, r, hb), _Disc(top + [0, 0, hb], r)]
        z = np.array([0.0, 0.0, 1.0])
        return patches, _box_edges(dx, dy, dz) + [Circle(top, z, r), Circle(top + [0, 0, hb], z, r)]
    raise ValueError(spec.kind)


def generate_scene(spec: SceneSpec) -> Scene:
    patches, curves = _solid(spec)
    if len(curves) > MAX_CURVES:
        raise ValueError(f"solid has {len(curves)} curves (limit {MAX_CURVES})")
    rng = rng_for(spec.seed, "surface")
    areas = np.array([p.area for p in patches])
    counts = rng.multinomial(spec.n_points, areas / areas.sum())
    pts = np.vstack([p.sample(int(k), rng) for p, k in zip(patches, counts) if k > 0])
    pts = pts[rng.permutation(len(pts))]
    pts, curves, tr = normalize_scene(pts, curves)
    return Scene(pts, curves, spec, tr, {"generator": "curvekit.synthgen"})


# -- stress protocols and augmentation --------------------------------------


def max_span(points) -> float:
    p = np.asarray(points, float)
    return float(np.max(p.max(axis=0) - p.min(axis=0)))


def add_noise(points, level_fraction: float, seed: int) -> np.ndarray:
    """Isotropic Gaussian noise, sigma = level_fraction * largest axis-aligned span."""
    if level_fraction < 0:
        raise ValueError("noise level must be nonnegative")
    p = np.asarray(points, float)
    if level_fraction == 0:
        return p.copy()
    sigma = level_fraction * max_span(p)
    return p + rng_for(seed, "noise").normal(0.0, sigma, p.shape)


def subsample(points, target_n: int, seed: int) -> np.ndarray:
    p = np.asarray(points, float)
    if not 1 <= target_n <= len(p):
        raise ValueError(f"cannot subsample {len(p)} points to {target_n}")
    idx = rng_for(seed, "subsample").permutation(len(p))[:target_n]
    return p[idx]


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform rotation from a uniformly distributed unit quaternion."""
    u1, u2, u3 = rng.random(3)
    a, b = math.sqrt(1 - u1), math.sqrt(u1)
    x, y = a * math.sin(2 * math.pi * u2), a * math.cos(2 * math.pi * u2)
    z, w = b * math.sin(2 * math.pi * u3), b * math.cos(2 * math.pi * u3)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def augment(scene: Scene, seed: int) -> Scene:
    """Random point dropout (p = 0.85, keep >= 20%) and one random rotation."""
    rng = rng_for(seed, "augment")
    n = len(scene.points)
    drop, frac = rng.random(), rng.uniform(MIN_KEEP_FRACTION, 1.0)
    order = rng.permutation(n)
    rot = random_rotation(rng)
    pts = scene.points
    if drop < DROPOUT_PROBABILITY:
        keep = min(n, max(math.ceil(MIN_KEEP_FRACTION * n), int(round(frac * n))))
        pts = pts[np.sort(order[:keep])]
    pts = pts @ rot.T
    curves = [transform_curve(c, rotation=rot) for c in scene.curves]
    prov = dict(scene.provenance, augment_seed=seed)
    return Scene(pts, curves, scene.spec, scene.transform, prov)
