import json
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from curvekit.curves import Arc, BezierCurve, Circle, LineSegment

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

coord = st.floats(-1.0, 1.0, allow_nan=False, allow_infinity=False)
point = st.tuples(coord, coord, coord).map(np.array)


@st.composite
def unit_vectors(draw):
    v = draw(st.tuples(coord, coord, coord).filter(lambda t: np.linalg.norm(t) > 0.1))
    v = np.array(v)
    return v / np.linalg.norm(v)


@st.composite
def lines(draw):
    return LineSegment(draw(point), draw(unit_vectors()), draw(st.floats(0.05, 2.0)))


@st.composite
def circles(draw):
    return Circle(draw(point), draw(unit_vectors()), draw(st.floats(0.05, 1.0)))


@st.composite
def beziers(draw):
    return BezierCurve(*[draw(point) for _ in range(4)])


@st.composite
def arcs(draw):
    center = draw(point)
    n = draw(unit_vectors())
    r = draw(st.floats(0.125, 1.0))
    a = draw(st.floats(0.0, 2 * np.pi))
    sweep = draw(st.floats(0.3, 1.9 * np.pi))
    u = np.cross(n, [1.0, 0, 0] if abs(n[0]) < 0.9 else [0, 1.0, 0])
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    pts = [center + r * (np.cos(t) * u + np.sin(t) * v) for t in (a, a + sweep / 2, a + sweep)]
    return Arc(*pts)


any_curve = st.one_of(lines(), circles(), beziers(), arcs())
open_curve = st.one_of(lines(), beziers(), arcs())


@pytest.fixture(scope="session")
def oracle():
    return json.loads((Path(__file__).parent / "fixtures" / "oracle_values.json").read_text())


def pytest_terminal_summary(terminalreporter):
    for mod in list(sys.modules.values()):
        results = getattr(mod, "ACCEPTANCE_RESULTS", None)
        if results:
            terminalreporter.section("acceptance criteria")
            for n in sorted(results):
                terminalreporter.write_line(results[n])
            break
