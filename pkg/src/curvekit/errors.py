"""Exception types shared across curvekit."""


class CurveKitError(Exception):
    pass


class CollinearPoints(CurveKitError, ValueError):
    """Three arc points do not define a well-conditioned circle."""


class ZeroExtent(CurveKitError, ValueError):
    """Point cloud has no spatial extent and cannot be normalized."""


class DegenerateInput(CurveKitError, ValueError):
    """A fitter received points that do not determine its primitive."""


class NonSmoothPoint(CurveKitError, ArithmeticError):
    """Gradient requested at a kink of a piecewise-linear loss."""


class SchemaError(CurveKitError, ValueError):
    """A scene or prediction document failed validation.

    ``path`` is a JSON-pointer-like location of the offending value.
    """

    def __init__(self, message, path="", line=None):
        self.path = path
        self.line = line
        where = path or "<root>"
        if line is not None:
            where = f"{where} (line {line})"
        super().__init__(f"{where}: {message}")
