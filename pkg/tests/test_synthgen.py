from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvekit.curves import ARC, BEZIER, CIRCLE, LINE, sample_by_interval
from curvekit.spatial import nearest_distances
from curvekit.synthgen import (
    MIN_KEEP_FRACTION, SOLID_KINDS, SceneSpec, add_noise, augment, generate_scene, max_span, random_rotation,
    rng_for, subsample,
)

EXPECTED = {
    "box": {LINE: 12},
    "cylinder": {CIRCLE: 2},
    "wedge": {LINE: 10, ARC: 2},
    "rounded-slab": {LINE: 12, ARC: 4, BEZIER: 2},
    "composite": {LINE: 12, CIRCLE: 2},
}


@pytest.fixture(scope="module")
def scenes():
    return {k: generate_scene(SceneSpec(k, n_points=8192, seed=3)) for k in SOLID_KINDS}


@pytest.mark.parametrize("kind", SOLID_KINDS)
def test_edge_counts(scenes, kind):
    assert dict(Counter(c.cls for c in scenes[kind].curves)) == EXPECTED[kind]


def test_all_curve_classes_represented(scenes):
    classes = {c.cls for s in scenes.values() for c in s.curves}
    assert classes == {LINE, CIRCLE, ARC, BEZIER}


@pytest.mark.parametrize("kind", SOLID_KINDS)
def test_normalized_cloud(scenes, kind):
    p = scenes[kind].points
    assert p.shape == (8192, 3)
    span = p.max(0) - p.min(0)
    assert span.max() == pytest.approx(2.0, abs=1e-12)
    assert np.allclose((p.max(0) + p.min(0)) / 2, 0, atol=1e-12)


@pytest.mark.parametrize("kind", SOLID_KINDS)
def test_curves_lie_on_surface(kind):
    s = generate_scene(SceneSpec(kind, n_points=32768, seed=3))
    for c in s.curves:
        d = nearest_distances(sample_by_interval(c, 0.02), s.points)
        assert d.max() < 0.045


def test_box_edges_are_exact(scenes):
    half = np.array([1.0, 0.6, 0.4])
    for c in scenes["box"].curves:
        for end in (c.start, c.end):
            assert np.allclose(np.abs(end), half, atol=1e-12)
    p = scenes["box"].points
    # every point sits on some face
    assert np.all(np.isclose(np.abs(p), half, atol=1e-12).any(axis=1))


def test_deterministic():
    a = generate_scene(SceneSpec("wedge", n_points=1024, seed=9))
    b = generate_scene(SceneSpec("wedge", n_points=1024, seed=9))
    c = generate_scene(SceneSpec("wedge", n_points=1024, seed=10))
    assert np.array_equal(a.points, b.points)
    assert [x.to_array().tolist() for x in a.curves] == [x.to_array().tolist() for x in b.curves]
    assert not np.array_equal(a.points, c.points)


def test_streams_independent():
    a = rng_for(5, "noise").random(4)
    b = rng_for(5, "subsample").random(4)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, rng_for(5, "noise").random(4))


def test_noise_sigma(oracle):
    s = generate_scene(SceneSpec("box", n_points=32768, seed=0))
    noisy = add_noise(s.points, 0.002, seed=1)
    diff = noisy - s.points
    sigma = oracle["noise_sigma_0.002_span2"]
    assert max_span(s.points) == pytest.approx(2.0)
    assert diff.std() == pytest.approx(sigma, rel=0.02)
    assert abs(diff.mean()) < 1e-4
    assert np.array_equal(add_noise(s.points, 0, seed=1), s.points)
    with pytest.raises(ValueError):
        add_noise(s.points, -0.1, seed=1)


def test_subsample():
    p = np.arange(300.0).reshape(100, 3)
    q = subsample(p, 10, seed=2)
    assert q.shape == (10, 3)
    assert len({tuple(r) for r in q}) == 10
    assert all(any((r == row).all() for row in p) for r in q)
    assert np.array_equal(q, subsample(p, 10, seed=2))
    with pytest.raises(ValueError):
        subsample(p, 101, seed=2)


@settings(max_examples=30)
@given(st.integers(0, 2**31))
def test_random_rotation_is_proper(seed):
    r = random_rotation(np.random.default_rng(seed))
    assert np.allclose(r @ r.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(r) == pytest.approx(1.0)


@settings(max_examples=20)
@given(st.integers(0, 2**31))
def test_augment_isometry_and_keep_fraction(seed):
    s = generate_scene(SceneSpec("cylinder", n_points=512, seed=1))
    a = augment(s, seed)
    assert MIN_KEEP_FRACTION * len(s.points) <= len(a.points) <= len(s.points)
    # distances from the origin and curve radii survive the rotation
    norms = np.linalg.norm(a.points, axis=1)
    assert set(np.round(norms, 9)) <= set(np.round(np.linalg.norm(s.points, axis=1), 9))
    assert [c.radius for c in a.curves] == pytest.approx([c.radius for c in s.curves])
    assert a.provenance["augment_seed"] == seed


def test_augment_rotates_curves_with_points():
    s = generate_scene(SceneSpec("box", n_points=4096, seed=2))
    a = augment(s, 7)
    for c in a.curves:
        assert nearest_distances(sample_by_interval(c, 0.05), a.points).max() < 0.15


@pytest.mark.parametrize("kwargs", [
    {"kind": "sphere"},
    {"kind": "box", "dims": (1, 2)},
    {"kind": "box", "dims": (1, -2, 1)},
    {"kind": "box", "n_points": 4},
])
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        SceneSpec(**kwargs)


def test_spec_geometry_validation():
    with pytest.raises(ValueError):
        generate_scene(SceneSpec("rounded-slab", dims=(2, 1, 0.3, 0.6, 0.3)))
    with pytest.raises(ValueError):
        generate_scene(SceneSpec("composite", dims=(1, 1, 1, 0.6, 0.5)))


def test_spec_round_trip():
    spec = SceneSpec("wedge", n_points=2048, seed=4)
    assert SceneSpec.from_dict(spec.to_dict()) == spec


def test_noise_per_axis_within_five_percent():
    s = generate_scene(SceneSpec("wedge", n_points=32768, seed=5))
    eta = 0.005 * max_span(s.points)
    diff = add_noise(s.points, 0.005, seed=9) - s.points
    assert np.allclose(diff.std(axis=0), eta, rtol=0.05)


def test_subsample_extremes():
    p = np.random.default_rng(0).normal(size=(50, 3))
    full = subsample(p, 50, seed=1)
    assert sorted(map(tuple, full)) == sorted(map(tuple, p))
    one = subsample(p, 1, seed=1)
    assert one.shape == (1, 3) and any((one[0] == r).all() for r in p)
