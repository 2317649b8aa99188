import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from singloc import sets as csg
from singloc.errors import InvalidInput, NotDifferentiable
from singloc.field import busemann, dist_from_set
from singloc.fgeod import (canonical_reparametrize, certify_f_geodesic, check_segment_characterization,
                           direction_fan, maximal_extension, trace_f_geodesic)
from singloc.geodesic import straight_segment
from singloc.metric import Euclidean
from singloc.scenario import build
from singloc.window import Window

E = Euclidean()
W3 = Window.square(3.0)


@pytest.fixture(scope="module")
def d_o():
    return dist_from_set(E, csg.PointSet((0.0, 0.0)), W3)


@pytest.fixture(scope="module")
def dn():
    return build("section7_dN", K=8)


def seg(a, b, samples=33):
    a, b = np.asarray(a, float), np.asarray(b, float)
    L = float(np.hypot(*(b - a)))
    return straight_segment(E, a, (b - a) / L, L, samples)


def test_certify_radial_and_chord(d_o):
    c = certify_f_geodesic(d_o, seg((1, 0), (3, 0)))
    assert c.certified and c.residual <= 1e-12
    chord = certify_f_geodesic(d_o, seg((1, 0), (0, 1)))
    assert not chord.certified and chord.residual > 0.5


def test_certify_section7_ray(dn):
    th = dn.config["thetas"][2]
    u = np.array([np.cos(th), np.sin(th)])
    assert certify_f_geodesic(dn.field, seg(1.0 * u, 4.0 * u)).certified


def test_canonical_parameter(d_o):
    c = certify_f_geodesic(d_o, seg((1e-9, 0), (1, 0)))
    assert canonical_reparametrize(d_o, c).segment.interval[0] == pytest.approx(0.0, abs=1e-8)
    c = certify_f_geodesic(d_o, seg((2, 0), (3, 0)))
    assert canonical_reparametrize(d_o, c).segment.interval == pytest.approx((2.0, 3.0))
    with pytest.raises(InvalidInput):
        canonical_reparametrize(d_o, certify_f_geodesic(d_o, seg((1, 0), (0, 1))))


def test_trace_radial(d_o):
    c = trace_f_geodesic(d_o, E, (1.0, 0.0))
    assert c.certified
    assert np.max(np.abs(c.segment.points[:, 1])) <= 1e-9
    assert c.segment.points[-1, 0] > 2.9


def test_trace_busemann_is_horizontal():
    b = busemann(E, (1.0, 0.0), (0.0, 0.0), Window.square(6.0))
    c = trace_f_geodesic(b, E, (0.0, 5.0))
    assert np.max(np.abs(c.segment.points[:, 1] - 5.0)) <= 1e-9


def test_trace_rejects_a_fan_with_two_directions():
    two = dist_from_set(E, csg.points_set([(-1, 0), (1, 0)]), W3)
    with pytest.raises(NotDifferentiable):
        trace_f_geodesic(two, E, (0.0, 1.0), "backward")


def test_fans(d_o):
    fan = direction_fan(d_o, E, (1.0, 1.0))
    assert fan.counts == (1, 1)
    assert np.allclose(fan.outgoing[0], np.array([1, 1]) / np.sqrt(2), atol=1e-3)
    torus = build("flat_torus")
    cut = direction_fan(torus.field, torus.metric, (0.5, 0.2))
    assert cut.counts[0] >= 2 and cut.counts[1] == 0
    origin = direction_fan(d_o, E, (0.0, 0.0), delta=0.05)
    assert origin.counts[0] == 0 and len(origin.outgoing_all) == origin.angular_res


def test_maximal_extension(d_o):
    mx = maximal_extension(d_o, E, certify_f_geodesic(d_o, seg((1, 0), (2, 0))))
    assert np.hypot(*mx.backward_end.point) <= 1e-3 and mx.backward_end.reason == "lower-singular"
    assert mx.forward_end.reason == "window-exit"
    assert mx.velocity_jump < 1e-6
    torus = build("flat_torus")
    stub = certify_f_geodesic(torus.field, straight_segment(torus.metric, (0.1, 0.05), (0.8944271909999159, 0.4472135954999579), 0.05))
    mt = maximal_extension(torus.field, torus.metric, stub)
    end = np.mod(mt.forward_end.point, 1.0)
    assert mt.forward_end.reason == "upper-singular"
    assert min(abs(end[0] - 0.5), abs(end[1] - 0.5)) <= 2e-3


def test_section7_segment_reaches_boundary_and_window(dn):
    th = dn.config["thetas"][1]
    u = np.array([np.cos(th), np.sin(th)])
    mx = maximal_extension(dn.field, dn.metric, certify_f_geodesic(dn.field, seg(1.5 * u, 2.0 * u)))
    assert np.hypot(*mx.backward_end.point) == pytest.approx(1.0, abs=2e-3)
    assert mx.forward_end.reason == "window-exit"


def test_segment_characterization(d_o, dn):
    r = check_segment_characterization(d_o, E, certify_f_geodesic(d_o, seg((1, 0), (2, 0))), 1.0)
    assert r.passed and r.segment_gap <= 1e-6
    b = busemann(E, (1.0, 0.0), (0.0, 0.0), W3)
    r = check_segment_characterization(b, E, certify_f_geodesic(b, seg((0, 0.5), (2, 0.5))), 0.0)
    assert r.passed and r.sublevel_distance == pytest.approx(2.0, abs=1e-6)
    th = dn.config["thetas"][0]
    u = np.array([np.cos(th), np.sin(th)])
    r = check_segment_characterization(dn.field, E, certify_f_geodesic(dn.field, seg(u, 2.5 * u)), 0.0)
    assert r.segment_gap <= 2 * dn.window.spacing(512)


radii = st.floats(0.3, 2.5)
angles = st.floats(0, 2 * np.pi)


@settings(max_examples=40, deadline=None)
@given(r0=radii, dr=st.floats(0.05, 0.5), a=angles)
def test_certified_segments_are_minimal(r0, dr, a):
    f = dist_from_set(E, csg.PointSet((0.0, 0.0)), W3)
    u = np.array([np.cos(a), np.sin(a)])
    c = certify_f_geodesic(f, seg(r0 * u, (r0 + dr) * u))
    assert c.certified and c.minimal_gap <= 1e-5


@settings(max_examples=25, deadline=None)
@given(x=st.floats(0.05, 0.45), y=st.floats(0.05, 0.45))
def test_torus_fan_counts_are_consistent(x, y):
    sc = build("flat_torus")
    fan = direction_fan(sc.field, sc.metric, (x, y))
    assert fan.counts == (1, 1)
