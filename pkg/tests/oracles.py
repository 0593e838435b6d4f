"""Independent reference computations for fixture values.

Nothing here imports curvekit. Each function recomputes a value from first
principles; ``python3 tests/oracles.py`` rewrites fixtures/oracle_values.json
and the test suite checks both the implementation against the frozen file and
the oracles against it.
"""

from __future__ import annotations

import itertools
import json
import math
import random
from fractions import Fraction
from pathlib import Path

import numpy as np

FIXTURE = Path(__file__).parent / "fixtures" / "oracle_values.json"


def circumcircle(a, b, c):
    """Center and radius from the two perpendicular-bisector planes plus the triangle plane."""
    a, b, c = (np.asarray(p, dtype=float) for p in (a, b, c))
    n = np.cross(b - a, c - a)
    m = np.array([b - a, c - a, n])
    rhs = np.array([(b @ b - a @ a) / 2, (c @ c - a @ a) / 2, n @ a])
    center = np.linalg.solve(m, rhs)
    return center.tolist(), float(np.linalg.norm(center - a))


def bezier_polyline_length(ctrl, n=200000):
    """Length of a dense polyline through de Casteljau evaluations."""
    p = [np.asarray(q, dtype=float) for q in ctrl]
    t = np.linspace(0.0, 1.0, n + 1)[:, None]
    a = [(1 - t) * p[i] + t * p[i + 1] for i in range(3)]
    b = [(1 - t) * a[i] + t * a[i + 1] for i in range(2)]
    pts = (1 - t) * b[0] + t * b[1]
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def interval_count(length, interval, closed):
    """Exact rational ceiling of length / interval on the decimal inputs."""
    n = math.ceil(Fraction(str(length)) / Fraction(str(interval)))
    return n if closed else max(2, n + 1)


def l1(a, b):
    return sum(abs(x - y) for x, y in zip(a, b))


def seq_loss(pred, gt):
    """Both branches written out: forward, and prediction traversed backwards."""
    fwd = sum(l1(p, g) for p, g in zip(pred, gt))
    bwd = sum(l1(p, g) for p, g in zip(pred[::-1], gt))
    return min(fwd, bwd)


def hybrid_loss(pm, pv, ps, gm, gv, gs):
    plus = l1(pm, gm) + l1(pv, gv)
    minus = l1(pm, gm) + l1(pv, [-x for x in gv])
    return min(plus, minus) + abs(ps - gs)


def chamfer(x, y):
    def directed(a, b):
        return sum(min(sum((p - q) ** 2 for p, q in zip(u, v)) for v in b) for u in a) / len(a)

    return directed(x, y) + directed(y, x)


def hausdorff(x, y):
    def directed(a, b):
        return max(min(math.dist(u, v) for v in b) for u in a)

    return 0.5 * (directed(x, y) + directed(y, x))


def pr_area(labels, num_gt):
    """Hand PR integration: precision envelope times recall increments."""
    tp = fp = 0
    points = []
    for lab in labels:
        tp += lab
        fp += not lab
        points.append((tp / num_gt, tp / (tp + fp)))
    area, prev_r = 0.0, 0.0
    for i, (r, _) in enumerate(points):
        best = max(p for _, p in points[i:])
        area += (r - prev_r) * best
        prev_r = r
    return area


def brute_force_assignment(cost):
    k = len(cost)
    best = None
    for perm in itertools.permutations(range(k)):
        total = sum(cost[perm[i]][i] for i in range(k))
        if best is None or total < best[0]:
            best = (total, perm)
    return best


def class_weights(counts, k, n_train):
    n0 = k * n_train - sum(counts)
    w = [1 / math.sqrt(n) for n in [n0, *counts]]
    return [x / sum(w) for x in w]


def random_matrices(seed=1234, count=5, size=7):
    rng = random.Random(seed)
    return [[[rng.uniform(-1, 1) for _ in range(size)] for _ in range(size)] for _ in range(count)]


def compute() -> dict:
    center, radius = circumcircle((1, 0, 0), (0, 1, 0), (-1, 0, 0))
    mats = random_matrices()
    return {
        "arc_half_circle": {"center": center, "radius": radius},
        "straight_bezier_length": bezier_polyline_length([(0, 0, 0), (0.2, 0, 0), (0.7, 0, 0), (1, 0, 0)]),
        "unit_circle_interval_count": interval_count(2 * math.pi, 0.01, True),
        "line2_interval_count": interval_count(2.0, 0.01, False),
        "line_short_interval_count": interval_count(0.005, 0.01, False),
        "obj_line_vertices": interval_count(2.0, 0.5, False),
        "normalize_box": {"scale": 2 / 4, "center": [2.0, 1.0, 1.0]},
        "seq_loss_offset": seq_loss(
            [(0.1, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 1)],
            [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 1)]),
        "hybrid_loss_offset": hybrid_loss((0.1, 0, 0), (0, 0, 1), 1.0, (0, 0, 0), (0, 0, 1), 1.2),
        "ce_uniform_w0": 0.048 * math.log(5),
        "pair_cost_uniform_0.3": -0.2 + 0.3,
        "chamfer_single": chamfer([(0, 0, 0)], [(1, 0, 0)]),
        "hausdorff_single": hausdorff([(0, 0, 0)], [(1, 0, 0)]),
        "ap_tp_fp_tp": pr_area([True, False, True], 2),
        "hungarian_2x2": brute_force_assignment([[1, 2], [2, 1]])[0],
        "hungarian_7x7": [{"matrix": m, "cost": brute_force_assignment(m)[0]} for m in mats],
        "class_weights_reference": class_weights([11347, 200751, 34672, 37528], 128, 8389),
        "noise_sigma_0.002_span2": 0.002 * 2,
    }


if __name__ == "__main__":
    FIXTURE.write_text(json.dumps(compute(), indent=1, sort_keys=True) + "\n")
    print(f"wrote {FIXTURE}")
