"""Exact nearest-neighbor queries between point sets."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

# below this many pairwise distances a dense scan beats building a tree
_BRUTE_FORCE_PAIRS = 65536


def as_points(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 1 and a.size == 3:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != 3:
        raise ValueError(f"expected an (N, 3) point array, got shape {a.shape}")
    if len(a) == 0:
        raise ValueError("point set is empty")
    return a


class PointIndex:
    """Static k-d tree over a cloud; all queries are exact."""

    def __init__(self, points):
        self.points = as_points(points)
        self._tree = cKDTree(self.points)

    def __len__(self):
        return len(self.points)

    def query(self, x, max_distance: float = np.inf):
        """Nearest cloud point for each query point.

        Returns ``(distances, indices)``; queries with no cloud point within
        ``max_distance`` get ``inf`` and index ``len(self)``.
        """
        d, i = self._tree.query(as_points(x), k=1, distance_upper_bound=max_distance)
        return d, i


def _dense_sq(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - y[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def nearest_sq_distances(x, y) -> np.ndarray:
    """Squared distance from every point of ``x`` to its nearest point in ``y``."""
    x = as_points(x)
    y = as_points(y)
    if len(x) * len(y) <= _BRUTE_FORCE_PAIRS:
        return _dense_sq(x, y).min(axis=1)
    d, _ = cKDTree(y).query(x, k=1)
    return d * d


def mutual_nearest_sq_distances(x, y) -> tuple[np.ndarray, np.ndarray]:
    """Both directed nearest squared distances, ``(x -> y, y -> x)``."""
    x = as_points(x)
    y = as_points(y)
    if len(x) * len(y) <= _BRUTE_FORCE_PAIRS:
        d = _dense_sq(x, y)
        return d.min(axis=1), d.min(axis=0)
    dx, _ = cKDTree(y).query(x, k=1)
    dy, _ = cKDTree(x).query(y, k=1)
    return dx * dx, dy * dy


def nearest_distances(x, y) -> np.ndarray:
    return np.sqrt(nearest_sq_distances(x, y))
