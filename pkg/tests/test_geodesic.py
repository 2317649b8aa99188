import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from singloc.errors import InvalidInput
from singloc.geodesic import (VariationProbe, distance, first_variation, integrate_geodesic,
                              minimal_segments, straight_segment)
from singloc.metric import Euclidean, FlatTorus, RandersZermelo, Riemannian


def test_integrate_straight_lines():
    seg = integrate_geodesic(Euclidean(), (0.0, 0.0), (1.0, 0.0), 5.0)
    assert np.allclose(seg.end, [5.0, 0.0])
    seg = integrate_geodesic(FlatTorus(), (0.0, 0.0), (1.0, 0.0), 0.75)
    assert np.allclose(np.mod(seg.end, 1.0), [0.75, 0.0])


def test_integrate_with_wind():
    m = RandersZermelo((0.5, 0.0))
    seg = integrate_geodesic(m, (0.0, 0.0), (1.0 / m.norm(np.zeros(2), np.array([1.0, 0.0])), 0.0), 2 / 3)
    assert np.allclose(seg.end, [1.0, 0.0], atol=1e-6)


def test_integrate_rejects_bad_steps():
    with pytest.raises(InvalidInput):
        integrate_geodesic(Euclidean(), (0, 0), (1, 0), 1.0, step=0.0)
    with pytest.raises(InvalidInput):
        integrate_geodesic(Euclidean(), (0, 0), (2, 0), 1.0)


def test_first_variation():
    m = Euclidean()
    seg = straight_segment(m, (0.0, 0.0), (1.0, 0.0), 1.0)
    n = len(seg.t)
    assert first_variation(m, VariationProbe(seg, np.zeros((n, 2)))) == 0.0
    U = np.zeros((n, 2))
    U[-1] = (0.0, 1.0)
    assert first_variation(m, VariationProbe(seg, U)) == pytest.approx(0.0, abs=1e-12)
    U[-1] = (1.0, 0.0)
    fv = first_variation(m, VariationProbe(seg, U))
    # length of the end-extended family L(u) = 1 + u
    h = 1e-6
    fd = (np.hypot(1 + h, 0) - np.hypot(1 - h, 0)) / (2 * h)
    assert fv == pytest.approx(fd, abs=1e-5)


def test_distance_examples():
    assert distance(Euclidean(), (0, 0), (3, 4)).value == pytest.approx(5.0)
    assert distance(FlatTorus(), (0, 0), (0.75, 0)).value == pytest.approx(0.25)


def test_torus_distance_matches_lattice_brute_force():
    rng = np.random.default_rng(3)
    m = FlatTorus()
    for p, q in rng.uniform(0, 1, (20, 2, 2)):
        brute = min(np.hypot(*(q + (i, j) - p)) for i in range(-3, 4) for j in range(-3, 4))
        assert distance(m, p, q).value == pytest.approx(brute, abs=1e-12)


def test_minimal_segment_counts():
    assert len(minimal_segments(Euclidean(), (0, 0), (1.3, -0.4))) == 1
    assert len(minimal_segments(FlatTorus(), (0, 0), (0.5, 0))) == 2
    assert len(minimal_segments(FlatTorus(), (0, 0), (0.5, 0.5))) == 4


def test_shooting_on_curved_metric_matches_known_length():
    # conformal factor 1 away from the bump: a long straight chord stays near Euclidean
    m = Riemannian(lambda x: np.broadcast_to(np.eye(2), np.shape(x)[:-1] + (2, 2)))
    r = distance(m, (0.0, 0.0), (1.0, 1.0))
    assert r.value == pytest.approx(np.sqrt(2), abs=1e-5)


winds = st.tuples(st.floats(-0.6, 0.6), st.floats(-0.6, 0.6))
pts = st.tuples(st.floats(-2, 2), st.floats(-2, 2))


@settings(max_examples=40, deadline=None)
@given(W=winds, p=pts, q=pts)
def test_wind_distance_is_travel_time(W, p, q):
    m = RandersZermelo(W)
    d = np.subtract(q, p)
    a = 1 - np.dot(W, W)
    b = 2 * np.dot(d, W)
    c = -np.dot(d, d)
    T = (-b + np.sqrt(b * b - 4 * a * c)) / (2 * a)
    assert distance(m, p, q).value == pytest.approx(T, abs=1e-9)
