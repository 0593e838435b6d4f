"""Prediction slot: one query's class logits plus all four parameter blocks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curves import (
    ARC, BEZIER, CIRCLE, LINE, Arc, BezierCurve, Circle, LineSegment, ParametricCurve,
)

MIN_SCALAR = 1e-4
SLOT_SIZE = 40
LOGITS = slice(0, 5)
BLOCKS = {
    BEZIER: slice(5, 17),
    LINE: slice(17, 24),
    CIRCLE: slice(24, 31),
    ARC: slice(31, 40),
}
BLOCK_SIZES = {c: s.stop - s.start for c, s in BLOCKS.items()}
# offsets of unit vectors / positive scalars inside the line and circle blocks
VECTOR_PART = slice(3, 6)
SCALAR_PART = 6


def softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    e = np.exp(z - np.max(z))
    return e / e.sum()


def _unit_or_default(v) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0.0 or not np.isfinite(n):
        return np.array([0.0, 0.0, 1.0])
    return v / n


def curve_from_block(cls: int, block) -> ParametricCurve:
    """Curve of class ``cls`` from a raw (possibly unnormalized) parameter block.

    Vectors are normalized and scalars clamped to ``MIN_SCALAR``; arcs may
    raise :class:`CollinearPoints`.
    """
    b = np.asarray(block, dtype=float)
    if cls == BEZIER:
        return BezierCurve(*b.reshape(4, 3))
    if cls == LINE:
        return LineSegment(b[0:3], _unit_or_default(b[3:6]), max(b[6], MIN_SCALAR))
    if cls == CIRCLE:
        return Circle(b[0:3], _unit_or_default(b[3:6]), max(b[6], MIN_SCALAR))
    if cls == ARC:
        return Arc(*b.reshape(3, 3))
    raise ValueError(f"class {cls} has no parameter block")


@dataclass(eq=False)
class PredictionSlot:
    """Flat 40-vector: logits[0:5], bezier[5:17], line[17:24], circle[24:31], arc[31:40]."""

    vector: np.ndarray

    def __post_init__(self):
        v = np.array(self.vector, dtype=float).reshape(SLOT_SIZE)
        self.vector = v

    @classmethod
    def build(cls, logits=None, bezier=None, line=None, circle=None, arc=None) -> "PredictionSlot":
        v = np.zeros(SLOT_SIZE)
        v[BLOCKS[LINE]][3:6] = (1.0, 0.0, 0.0)
        v[BLOCKS[CIRCLE]][3:6] = (0.0, 0.0, 1.0)
        v[BLOCKS[LINE]][6] = v[BLOCKS[CIRCLE]][6] = 1.0
        v[BLOCKS[ARC]] = (1.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0)
        v[BLOCKS[BEZIER]] = np.linspace(0, 1, 4)[:, None].repeat(3, 1).ravel()
        if logits is not None:
            v[LOGITS] = logits
        for c, block in ((BEZIER, bezier), (LINE, line), (CIRCLE, circle), (ARC, arc)):
            if block is None:
                continue
            if hasattr(block, "to_array"):
                block = block.to_array()
            v[BLOCKS[c]] = np.asarray(block, dtype=float).ravel()
        return cls(v)

    @classmethod
    def from_curve(cls, curve: ParametricCurve, logits=None) -> "PredictionSlot":
        """Slot whose ``curve.cls`` block equals ``curve`` (others default)."""
        return cls.build(logits=logits, **{_BLOCK_NAMES[curve.cls]: curve})

    @property
    def logits(self) -> np.ndarray:
        return self.vector[LOGITS]

    def block(self, cls: int) -> np.ndarray:
        return self.vector[BLOCKS[cls]]

    def probs(self) -> np.ndarray:
        return softmax(self.logits)

    def predicted_class(self) -> int:
        return int(np.argmax(self.logits))

    def curve(self, cls: int) -> ParametricCurve:
        return curve_from_block(cls, self.block(cls))

    def copy(self) -> "PredictionSlot":
        return PredictionSlot(self.vector.copy())

    def project(self, classes=(LINE, CIRCLE)) -> None:
        """Re-normalize unit vectors and clamp scalars of line/circle blocks in place."""
        for c in classes:
            b = self.vector[BLOCKS[c]]
            b[VECTOR_PART] = _unit_or_default(b[VECTOR_PART])
            b[SCALAR_PART] = max(b[SCALAR_PART], MIN_SCALAR)


_BLOCK_NAMES = {BEZIER: "bezier", LINE: "line", CIRCLE: "circle", ARC: "arc"}
