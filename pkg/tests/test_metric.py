import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from singloc.errors import InvalidInput, InvalidMetric
from singloc.metric import (Euclidean, FlatTorus, RandersZermelo, Riemannian, Tangent2, eval_norm,
                            fundamental_tensor, metric_from_dict, reverse, spray_acceleration,
                            validate_metric)


def wind_norm(W, v):
    # positive root of |v - F W| = F
    W, v = np.asarray(W, float), np.asarray(v, float)
    a = 1 - W @ W
    b = 2 * (v @ W)
    c = -(v @ v)
    return (-b + np.sqrt(b * b - 4 * a * c)) / (2 * a)


def test_euclidean_norm():
    assert eval_norm(Euclidean(), Tangent2(np.zeros(2), np.array([3.0, 4.0]))) == pytest.approx(5.0)


def test_randers_norm_both_ways():
    m = RandersZermelo((0.5, 0.0))
    assert eval_norm(m, Tangent2(np.zeros(2), np.array([1.0, 0.0]))) == pytest.approx(2 / 3, abs=1e-12)
    assert eval_norm(m, Tangent2(np.zeros(2), np.array([-1.0, 0.0]))) == pytest.approx(2.0, abs=1e-12)


def test_tensor_examples():
    t = fundamental_tensor(Euclidean(), Tangent2(np.zeros(2), np.array([0.3, -2.0])))
    assert np.allclose(t, np.eye(2))
    r = Riemannian(matrix=np.diag([1.0, 4.0]))
    for v in ((1.0, 0.0), (0.0, 1.0)):
        assert np.allclose(fundamental_tensor(r, Tangent2(np.zeros(2), np.array(v))), np.diag([1.0, 4.0]))


def test_spray_vanishes_on_flat_metrics():
    for m in (Euclidean(), FlatTorus()):
        assert np.allclose(spray_acceleration(m, Tangent2(np.array([0.2, 0.7]), np.array([1.0, 2.0]))), 0.0)


def test_reverse():
    e = Euclidean()
    assert reverse(e).norm(np.zeros(2), np.array([1.0, 2.0])) == pytest.approx(e.norm(np.zeros(2), np.array([1.0, 2.0])))
    rv = reverse(RandersZermelo((0.5, 0.0)))
    assert rv.norm(np.zeros(2), np.array([1.0, 0.0])) == pytest.approx(2.0, abs=1e-12)


def test_validation():
    assert validate_metric(Euclidean(), 100).passed
    rep = validate_metric(RandersZermelo((0.99, 0.0)), 200)
    assert rep.passed and 0 < rep.min_eigenvalue < 0.5


def test_randers_tensor_matches_hessian_of_half_square():
    m = RandersZermelo((0.99, 0.0))
    x, h = np.zeros(2), 1e-4
    for v in ((1.0, 0.0), (-1.0, 0.3), (0.2, 1.0)):
        v = np.array(v)
        E = lambda u: 0.5 * wind_norm((0.99, 0.0), u) ** 2
        H = np.empty((2, 2))
        for i in range(2):
            for j in range(2):
                ei, ej = h * np.eye(2)[i], h * np.eye(2)[j]
                H[i, j] = (E(v + ei + ej) - E(v + ei - ej) - E(v - ei + ej) + E(v - ei - ej)) / (4 * h * h)
        assert np.allclose(m.tensor(x, v), H, rtol=1e-4, atol=1e-4)
    with pytest.raises(InvalidMetric):
        RandersZermelo((1.01, 0.0))


def test_bad_inputs():
    with pytest.raises(InvalidInput):
        eval_norm(Euclidean(), Tangent2(np.zeros(2), np.array([np.nan, 1.0])))
    with pytest.raises(InvalidMetric):
        Riemannian(matrix=[[1.0, 0.0], [0.0, -1.0]])


def test_torus_distance_uses_nearest_translate():
    assert FlatTorus().dist(np.zeros(2), np.array([0.75, 0.0])) == pytest.approx(0.25)


def test_round_trip():
    for m in (Euclidean(), FlatTorus(2.0, 1.0), RandersZermelo((0.2, -0.3)), Riemannian(matrix=np.diag([1.0, 4.0]))):
        m2 = metric_from_dict(m.to_dict())
        v = np.array([0.4, -1.3])
        assert m2.norm(np.zeros(2), v) == pytest.approx(m.norm(np.zeros(2), v))


vec = st.tuples(st.floats(-5, 5), st.floats(-5, 5)).filter(lambda v: np.hypot(*v) > 1e-3)
winds = st.tuples(st.floats(-0.6, 0.6), st.floats(-0.6, 0.6))


@settings(max_examples=60, deadline=None)
@given(W=winds, v=vec, lam=st.floats(0.01, 100))
def test_randers_homogeneity_and_oracle(W, v, lam):
    m = RandersZermelo(W)
    v = np.array(v)
    F = float(m.norm(np.zeros(2), v))
    assert F == pytest.approx(wind_norm(W, v), rel=1e-9)
    assert float(m.norm(np.zeros(2), lam * v)) == pytest.approx(lam * F, rel=1e-9)


@settings(max_examples=60, deadline=None)
@given(W=winds, v=vec)
def test_reverse_is_an_involution(W, v):
    m = RandersZermelo(W)
    v = np.array(v)
    x = np.zeros(2)
    assert float(m.reverse().norm(x, v)) == pytest.approx(float(m.norm(x, -v)), rel=1e-9)
    assert float(m.reverse().reverse().norm(x, v)) == pytest.approx(float(m.norm(x, v)), rel=1e-9)


@settings(max_examples=60, deadline=None)
@given(W=winds, a=vec, b=vec, c=vec)
def test_randers_triangle_inequality(W, a, b, c):
    m = RandersZermelo(W)
    a, b, c = map(np.array, (a, b, c))
    assert m.dist(a, c) <= m.dist(a, b) + m.dist(b, c) + 1e-9
