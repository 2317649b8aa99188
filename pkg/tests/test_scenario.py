import json

import numpy as np
import pytest

from singloc import scenario as S
from singloc.errors import InvalidInput
from singloc.geodesic import distance


def test_catalogue():
    names = S.list_scenarios()
    for n in ("euclidean", "two_point_dN", "busemann_x", "section7_dN", "section7_eta", "section7_combined",
              "flat_torus", "randers_wind", "fab", "fab_stack"):
        assert n in names
    with pytest.raises(KeyError):
        S.build("nope")


def test_theta_sequence():
    th = S.theta_sequence(8)
    assert len(th) == 9 and np.all(np.diff(th) < 0) and th[-1] > 0
    with pytest.raises(InvalidInput):
        S.theta_sequence(4, rule=lambda i: float(i))


def test_notched_disk_geometry():
    th = S.theta_sequence(8)
    N, centers, radii, omegas = S.notched_disk(th)
    # each bite passes through the boundary points at angles theta_i and theta_{i+1}
    for c, r, a, b in zip(centers, radii, th[:-1], th[1:]):
        assert np.hypot(*(c - [np.cos(a), np.sin(a)])) == pytest.approx(r)
        assert np.hypot(*(c - [np.cos(b), np.sin(b)])) == pytest.approx(r)
        assert np.hypot(*c) == pytest.approx(2.0)


def test_section7_oracles():
    sc = S.build("section7_dN", K=8)
    ax = sc.oracle["axis_values"].value
    assert np.allclose(sc.field(np.asarray(ax["points"])), ax["values"], atol=1e-6)
    eta = S.build("section7_eta", K=8)
    lv = eta.oracle["limit_values"].value
    assert np.allclose(eta.field(np.asarray(lv["points"])), lv["values"], atol=1e-6)


def test_eta_limit_on_axis():
    gen = S.bulges_for(S.theta_sequence(8))
    xs = np.linspace(-5, 5, 21)
    assert np.allclose(S.eta_limit(gen, np.column_stack([xs, 0 * xs])), np.abs(xs), atol=1e-9)


def test_randers_oracle_values():
    sc = S.build("randers_wind")
    d = sc.oracle["distances"].value
    assert d["values"][:2] == pytest.approx([2 / 3, 2.0], abs=1e-12)
    for (p, q), v in zip(d["pairs"], d["values"]):
        assert distance(sc.metric, p, q).value == pytest.approx(v, abs=1e-9)


def test_oracle_bases_are_recorded():
    for n in S.list_scenarios():
        for e in S.build(n).oracle.entries:
            assert e.basis in ("claim", "elementary", "computed")
            assert e.basis != "computed" or e.procedure
    o = S.OracleData()
    with pytest.raises(InvalidInput):
        o.add("x", "values", 1.0, "computed")


def test_dump_and_load_round_trip():
    sc = S.build("two_point_dN")
    text = S.dump(sc)
    rec = json.loads(text)
    assert rec["name"] == "two_point_dN" and rec["builder"] == "two_point_dN"
    again = S.load(text)
    P = sc.window.grid(9).reshape(-1, 2)
    assert np.allclose(again.field(P), sc.field(P))
    raw = S.load({"field": sc.field.to_dict()})
    assert np.allclose(raw.field(P), sc.field(P))
    with pytest.raises(InvalidInput):
        S.load({"name": "empty"})


def test_fab_agrees_with_base_outside_the_sector():
    sc = S.build("fab")
    a, b = sc.config["a"], sc.config["b"]
    rng = np.random.default_rng(0)
    r = rng.uniform(1.2, 5.0, 200)
    ang = rng.uniform(b + 0.05, 2 * np.pi - 0.05, 200)
    P = np.column_stack([r * np.cos(ang), r * np.sin(ang)])
    assert np.allclose(sc.field(P), r, atol=1e-9)
    assert sc.field.range_estimate[0] == 1.0 and a < b


def test_bad_parameters():
    with pytest.raises(InvalidInput):
        S.build_section7_dN(K=1)
    with pytest.raises(InvalidInput):
        S.build_fab_family(0.5, 0.2)
