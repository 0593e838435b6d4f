"""Parametric curve set prediction toolkit: losses, matching, metrics and post-processing."""

from .curves import (
    ARC, BEZIER, CIRCLE, CLASS_NAMES, CURVE_CLASSES, LINE, NO_OBJECT,
    Arc, BezierCurve, Circle, LineSegment,
)
from .errors import (
    CollinearPoints, CurveKitError, DegenerateInput, NonSmoothPoint, SchemaError, ZeroExtent,
)

__version__ = "0.1.0"

__all__ = [
    "ARC", "BEZIER", "CIRCLE", "CLASS_NAMES", "CURVE_CLASSES", "LINE", "NO_OBJECT",
    "Arc", "BezierCurve", "Circle", "LineSegment",
    "CollinearPoints", "CurveKitError", "DegenerateInput", "NonSmoothPoint", "SchemaError", "ZeroExtent",
]
