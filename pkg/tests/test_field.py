import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from singloc import sets as csg
from singloc.errors import InvalidInput
from singloc.field import (FunctionField, busemann, check_lipschitz, combine, dist_from_set, field_from_dict,
                           horofunction, neg_dist_to_set, wu_eta)
from singloc.metric import Euclidean, RandersZermelo
from singloc.scenario import build
from singloc.window import Window

W3 = Window.square(3.0)
E = Euclidean()


def test_dist_from_set_examples():
    assert float(dist_from_set(E, csg.Disk((0, 0), 1.0), W3)((2.0, 0.0))) == pytest.approx(1.0, abs=1e-9)
    two = dist_from_set(E, csg.points_set([(-1, 0), (1, 0)]), W3)
    assert float(two((0.0, 1.0))) == pytest.approx(np.sqrt(2), abs=1e-12)
    dn = build("section7_dN", K=8).field
    for t in (1.5, 3.0, -4.0):
        assert float(dn((t, 0.0))) == pytest.approx(abs(t) - 1, abs=1e-6)


def test_dist_vanishes_on_the_set():
    f = dist_from_set(E, csg.Disk((0.5, 0), 1.0), W3)
    rng = np.random.default_rng(0)
    P = W3.sample(rng, 500)
    inside = np.hypot(P[:, 0] - 0.5, P[:, 1]) <= 1.0
    assert np.all(f(P[inside]) == 0.0)
    assert np.all(f(P[~inside]) > 0.0)


def test_neg_dist_examples():
    f = neg_dist_to_set(E, csg.PointSet((0, 0)), Window.square(6.0))
    assert float(f((3.0, 4.0))) == pytest.approx(-5.0)
    g = neg_dist_to_set(RandersZermelo((0.5, 0)), csg.PointSet((0, 0)), W3)
    assert float(g((1.0, 0.0))) == pytest.approx(-2.0, abs=1e-9)
    P = W3.grid(33).reshape(-1, 2)
    assert np.all(g(P) <= 0.0) and float(g((0.0, 0.0))) == 0.0


def test_busemann_examples():
    b = busemann(E, (1.0, 0.0), (0.0, 0.0), W3)
    assert float(b((2.0, 1.5))) == pytest.approx(2.0, abs=1e-6)
    s = np.linspace(0, 2.5, 7)
    assert np.allclose(b(np.column_stack([s, 0 * s])), s, atol=1e-6)


def test_busemann_with_wind_matches_limit_of_travel_times():
    m = RandersZermelo((0.5, 0.0))
    b = busemann(m, (1.0, 0.0), (0.0, 0.0), W3)
    x = np.array([1.0, 0.0])
    # the F-unit ray direction is (3/2, 0), so gamma(T) = (3T/2, 0)
    T = 100.0
    ray = np.array([1.5 * T, 0.0])
    d = ray - x
    a, bb, c = 0.75, 2 * d @ m.wind, -(d @ d)
    travel = (-bb + np.sqrt(bb * bb - 4 * a * c)) / (2 * a)
    assert float(b(x)) == pytest.approx(T - travel, abs=1e-9)
    assert float(b(x)) == pytest.approx(2 / 3, abs=1e-9)


def test_approximants_are_monotone():
    b = busemann(E, (1.0, 1.0), (0.0, 0.0), W3)
    P = W3.sample(np.random.default_rng(1), 200)
    vals = np.array([b.approximant(t, P) for t in (10.0, 100.0, 1000.0)])
    assert np.all(np.diff(vals, axis=0) >= -1e-8)


def test_horofunction_examples():
    h = horofunction(E, lambda n: np.array([float(n) * 1e3, 0.0]) if n > 1 else np.array([1.0, 0.0]), 64, W3)
    P = W3.sample(np.random.default_rng(2), 50)
    # d(x1, x_n) - d(x, x_n) -> x - 1 along +x
    assert np.allclose(h(P), P[:, 0] - 1.0, atol=1e-3)
    assert float(h((1.0, 0.0))) == pytest.approx(0.0, abs=1e-9)


def test_horofunction_alternating_is_max_of_directions():
    def seq(n):
        if n == 1:
            return np.array([1.0, 0.0])
        r = 1e4 * n
        return np.array([r, 0.0]) if n % 2 else np.array([0.0, r])
    h = horofunction(E, seq, 64, W3)
    P = W3.sample(np.random.default_rng(3), 50)
    # the +x subsequence tends to x - 1, the +y subsequence to y
    assert np.allclose(h(P), np.maximum(P[:, 0] - 1.0, P[:, 1]), atol=1e-5)


def test_horofunction_needs_divergence():
    with pytest.raises(InvalidInput):
        horofunction(E, lambda n: np.array([1.0, 0.0]), 64, W3)


def test_wu_eta():
    eta = wu_eta(E, (0.0, 0.0), [8.0, 16.0, 32.0, 64.0], W3)
    P = W3.grid(17).reshape(-1, 2)
    sp = W3.spacing(257)
    assert np.allclose(eta(P), np.hypot(P[:, 0], P[:, 1]), atol=2 * sp)
    assert float(eta((0.0, 0.0))) == pytest.approx(0.0, abs=2 * sp)
    sc = build("section7_eta", K=8)
    xs = np.array([-5.0, -2.0, 0.0, 1.0, 4.5])
    assert np.allclose(sc.field(np.column_stack([xs, 0 * xs])), np.abs(xs), atol=1e-6)


def test_combine_examples():
    bp = busemann(E, (1.0, 0.0), (0.0, 0.0), W3)
    bm = busemann(E, (-1.0, 0.0), (0.0, 0.0), W3)
    P = W3.sample(np.random.default_rng(4), 200)
    assert np.allclose(combine("max", bp, bm)(P), np.abs(P[:, 0]), atol=1e-6)
    assert np.array_equal(combine("max", bp, bp)(P), bp(P))


def test_combined_field_glues_along_axis():
    sc = build("section7_combined", K=8)
    f = sc.field
    xs = np.linspace(-5, 5, 41)
    assert np.allclose(f(np.column_stack([xs, 0 * xs])), np.maximum(np.abs(xs), 1.0), atol=1e-6)


def test_lipschitz_examples():
    assert check_lipschitz(dist_from_set(E, csg.Disk((0, 0), 1.0), W3), 500, 300).passed
    bad = FunctionField(E, W3, lambda x: 2 * x[..., 0]).freeze()
    r = check_lipschitz(bad, 500, 300)
    assert not r.passed and r.max_violation > 0
    b = check_lipschitz(busemann(E, (0.6, 0.8), (0.0, 0.0), W3), 500, 300)
    assert b.gradient_norm_max == pytest.approx(1.0, abs=1e-3)


def test_round_trip_through_dict():
    f = dist_from_set(E, csg.points_set([(-1, 0), (1, 0)]), W3)
    g = field_from_dict(f.to_dict())
    P = W3.sample(np.random.default_rng(5), 50)
    assert np.allclose(f(P), g(P))


pts = st.tuples(st.floats(-2.9, 2.9), st.floats(-2.9, 2.9))
winds = st.tuples(st.floats(-0.6, 0.6), st.floats(-0.6, 0.6))


@settings(max_examples=50, deadline=None)
@given(W=winds, x=pts, y=pts, c=pts)
def test_distance_fields_are_one_lipschitz(W, x, y, c):
    m = RandersZermelo(W)
    f = dist_from_set(m, csg.PointSet(c), W3)
    g = neg_dist_to_set(m, csg.PointSet(c), W3)
    x, y = np.array(x), np.array(y)
    for h in (f, g):
        assert float(h(y)) - float(h(x)) <= float(m.dist(x, y)) + 1e-9


@settings(max_examples=50, deadline=None)
@given(a=pts, b=pts, x=pts)
def test_max_dominates_and_attains(a, b, x):
    f1 = dist_from_set(E, csg.PointSet(a), W3)
    f2 = dist_from_set(E, csg.PointSet(b), W3)
    h = combine("max", f1, f2)
    v, v1, v2 = float(h(x)), float(f1(x)), float(f2(x))
    assert v >= v1 and v >= v2 and v in (v1, v2)
