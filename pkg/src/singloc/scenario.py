"""Shipped geometries with exact reference data.

Each scenario bundles a metric, a frozen field, a computational window and a
list of reference entries. Every entry records where its value comes from:
``claim`` for properties asserted of the construction itself, ``elementary``
for immediate facts, and ``computed`` for values produced by an independent
procedure (named in ``procedure``).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from . import sets as csg
from .errors import InvalidInput
from .field import (BulgedSphere, Region, ScalarField, busemann, combine, constant, dist_from_set,
                    field_from_dict, glued, shifted, wu_eta)
from .metric import Euclidean, FlatTorus, Metric, RandersZermelo, metric_from_dict
from .window import Window

SECTION7_WINDOW = Window.square(6.0)
PLAIN_WINDOW = Window.square(3.0)
RANDERS_WINDOW = Window.square(4.0)
DEFAULT_K = 12
DEFAULT_LEVELS = tuple(2.0 ** k for k in range(2, 21))


@dataclass
class OracleEntry:
    name: str
    kind: str
    value: object
    basis: str
    procedure: str = ""

    def to_record(self) -> dict:
        v = self.value
        if isinstance(v, np.ndarray):
            v = v.tolist()
        return {"name": self.name, "kind": self.kind, "value": _jsonable(v), "basis": self.basis,
                "procedure": self.procedure}


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


@dataclass
class OracleData:
    entries: list = dc_field(default_factory=list)

    def add(self, name, kind, value, basis, procedure=""):
        if basis not in ("claim", "elementary", "computed"):
            raise InvalidInput(f"unknown basis {basis!r}")
        if basis == "computed" and not procedure:
            raise InvalidInput("computed entries must name their procedure")
        self.entries.append(OracleEntry(name, kind, value, basis, procedure))

    def __getitem__(self, name) -> OracleEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def names(self):
        return [e.name for e in self.entries]

    def to_record(self):
        return [e.to_record() for e in self.entries]


@dataclass
class Scenario:
    name: str
    metric: Metric
    field: ScalarField
    window: Window
    oracle: OracleData
    config: dict
    builder: str = ""
    params: dict = dc_field(default_factory=dict)

    def to_record(self) -> dict:
        return {"name": self.name, "builder": self.builder, "params": _jsonable(self.params),
                "metric": self.metric.to_dict(), "window": self.window.to_list(),
                "periodic": self.window.periodic, "config": _jsonable(self.config),
                "oracle": self.oracle.to_record()}


def _e(phi):
    return np.array([np.cos(phi), np.sin(phi)])


def theta_sequence(K: int, rule: Callable[[int], float] | None = None, scale: float = np.pi) -> np.ndarray:
    """theta_1 > ... > theta_{K+1} > 0; the default halves at each step."""
    if rule is None:
        th = scale * 2.0 ** -np.arange(1, K + 2)
    else:
        th = np.array([float(rule(i)) for i in range(1, K + 2)])
    if np.any(np.diff(th) >= 0) or th[-1] <= 0 or th[0] >= np.pi:
        raise InvalidInput("theta rule must be strictly decreasing, positive, with theta_1 < pi")
    return th


# -- the notched disk ---------------------------------------------------------

def notched_disk(thetas: np.ndarray, axis: float = 0.0):
    """Closed unit disk minus the open disks B_{r_i}(p_i), rotated by ``axis``."""
    K = len(thetas) - 1
    omegas = 0.5 * (thetas[:-1] + thetas[1:])
    centers = np.array([2 * _e(axis + w) for w in omegas])
    radii = np.array([np.hypot(*(c - _e(axis + t))) for c, t in zip(centers, thetas[:-1])])
    bites = csg.Union([csg.Disk(c, float(r)) for c, r in zip(centers, radii)], truncation=K)
    return csg.Difference(csg.Disk((0.0, 0.0), 1.0), bites, truncation=K), centers, radii, omegas


def bulges_for(thetas: np.ndarray, axis: float = 0.0) -> BulgedSphere:
    return BulgedSphere([(axis - thetas[i], axis - thetas[i + 1]) for i in range(len(thetas) - 1)], 2.0)


def eta_limit(bulges: BulgedSphere, x) -> np.ndarray:
    """Closed-form limit of n - d(x, C_n) as n -> infinity.

    The big circle contributes the support function <x, e(phi)> over the
    directions outside the bulge wedges (corners included); bulge i
    contributes 2 cos(half-width) + |x - u_i| for points seen from u_i inside
    the wedge.
    """
    x = np.asarray(x, dtype=float)
    ang = np.mod(np.arctan2(x[..., 1], x[..., 0]), 2 * np.pi)
    wedges = [(np.mod(lo, 2 * np.pi), np.mod(hi, 2 * np.pi)) for lo, hi in bulges.bulges]

    def blocked(a):
        out = np.zeros(np.shape(a), dtype=bool)
        for lo, hi in wedges:
            out |= (np.mod(a - lo, 2 * np.pi) > 0) & (np.mod(a - lo, 2 * np.pi) < np.mod(hi - lo, 2 * np.pi))
        return out

    r = np.hypot(x[..., 0], x[..., 1])
    # support function over the admissible directions: the own direction if allowed, else a corner
    best = np.where(blocked(ang), -np.inf, r)
    for lo, hi in bulges.bulges:
        for phi in (lo, hi):
            best = np.maximum(best, x[..., 0] * np.cos(phi) + x[..., 1] * np.sin(phi))
    for (lo, hi), u in zip(bulges.bulges, bulges.centers()):
        d = x - u
        a = np.arctan2(d[..., 1], d[..., 0])
        inside = np.mod(a - lo, 2 * np.pi) <= np.mod(hi - lo, 2 * np.pi)
        best = np.where(inside, np.maximum(best, 2 * np.cos((hi - lo) / 2) + np.hypot(d[..., 0], d[..., 1])), best)
    return best


def _combined_field(m: Metric, W: Window, thetas: np.ndarray, axis: float, levels, grid_n: int):
    N, centers, radii, omegas = notched_disk(thetas, axis)
    dN = dist_from_set(m, N, W, grid_n)
    gen = bulges_for(thetas, axis)
    eta = wu_eta(m, (0.0, 0.0), levels, W, gen)
    eta1 = combine("max", eta, constant(m, W, 1.0))
    region = Region("half_plane", tuple(_e(axis + np.pi / 2)), 0.0)
    return glued(shifted(dN, 1.0), eta1, region), dN, eta, N, centers, radii, omegas, gen


# -- builders ------------------------------------------------------------------

def build_section7_dN(K: int = DEFAULT_K, theta_rule: Callable[[int], float] | None = None,
                      grid_n: int = 512) -> Scenario:
    if K < 2:
        raise InvalidInput("K must be >= 2")
    m = Euclidean()
    W = SECTION7_WINDOW
    th = theta_sequence(K, theta_rule)
    N, centers, radii, omegas = notched_disk(th)
    f = dist_from_set(m, N, W, grid_n)
    o = OracleData()
    o.add("focal_points", "points", centers, "claim")
    o.add("bite_radii", "values", radii, "claim")
    o.add("upper_points", "labels", {"points": centers, "label": "upper-singular"}, "claim")
    o.add("axis_values", "values", {"points": [[t, 0.0] for t in (1.5, 3.0, 5.0, -1.5, -3.0, -5.0)],
                                    "values": [0.5, 2.0, 4.0, 0.5, 2.0, 4.0]}, "claim")
    o.add("value_at_minus3", "values", {"points": [[-3.0, 0.0]], "values": [2.0]}, "claim")
    o.add("regular_point", "labels", {"points": [[2.0, 0.0]], "label": "regular"}, "claim")
    o.add("maximal_rays", "rays", {"origin": [0.0, 0.0], "from_radius": 1.0,
                                   "angles": list(th[:-1]) + [0.0, np.pi, 1.5 * np.pi]}, "claim")
    o.add("axis_geodesic", "line", {"start": [1.0, 0.0], "direction": [1.0, 0.0]}, "claim")
    return Scenario("section7_dN", m, f, W, o,
                    {"K": K, "thetas": th, "grid_n": grid_n, "delta_eq": 0.2, "locus_grid": 512},
                    "section7_dN", {"K": K})


def build_section7_eta(K: int = DEFAULT_K, levels=DEFAULT_LEVELS,
                       theta_rule: Callable[[int], float] | None = None) -> Scenario:
    if K < 2:
        raise InvalidInput("K must be >= 2")
    lv = np.asarray(levels, dtype=float)
    if lv.min() < 3:
        raise InvalidInput("levels must be >= 3")
    m = Euclidean()
    W = SECTION7_WINDOW
    th = theta_sequence(K, theta_rule)
    gen = bulges_for(th)
    f = wu_eta(m, (0.0, 0.0), lv, W, gen)
    u = gen.centers()
    o = OracleData()
    xs = np.array([-5.0, -3.0, -1.0, 0.0, 0.5, 2.0, 4.5])
    o.add("axis_values", "values", {"points": np.column_stack([xs, 0 * xs]), "values": np.abs(xs)}, "claim")
    o.add("origin_value", "values", {"points": [[0.0, 0.0]], "values": [0.0]}, "claim")
    o.add("lower_points", "labels", {"points": u, "label": "lower-singular"}, "claim")
    o.add("lower_midpoints", "labels", {"points": 0.5 * u, "label": "lower-singular"}, "claim")
    probe = np.array([[0.0, -5.0], [3.0, -1.0], [1.0, -0.2], [-2.0, 3.0], [4.0, -0.3], [1.9, -0.1]])
    o.add("limit_values", "values", {"points": probe, "values": eta_limit(gen, probe)}, "computed",
          "eta_limit")
    return Scenario("section7_eta", m, f, W, o, {"K": K, "thetas": th, "levels": lv, "delta_eq": 0.2},
                    "section7_eta", {"K": K})


def build_section7_combined(K: int = DEFAULT_K, levels=DEFAULT_LEVELS, grid_n: int = 512) -> Scenario:
    if K < 2:
        raise InvalidInput("K must be >= 2")
    m = Euclidean()
    W = SECTION7_WINDOW
    th = theta_sequence(K)
    f, dN, eta, N, centers, radii, omegas, gen = _combined_field(m, W, th, 0.0, levels, grid_n)
    object.__setattr__(f, "_frozen", False)
    f.range_estimate = (1.0, np.inf)
    f.freeze()
    o = OracleData()
    o.add("infimum", "values", 1.0, "claim")
    o.add("value_3_0", "values", {"points": [[3.0, 0.0]], "values": [3.0]}, "claim")
    o.add("value_0_m5", "values", {"points": [[0.0, -5.0]], "values": [float(eta_limit(gen, np.array([0.0, -5.0])))]},
          "computed", "eta_limit")
    o.add("regular_point", "labels", {"points": [[2.0, 0.0]], "label": "regular"}, "claim")
    o.add("nearby_singular", "proximity", {"point": [2.0, 0.0], "radius": 0.2,
                                           "upper": centers[np.hypot(*(centers - [2, 0]).T) < 0.2],
                                           "lower": gen.centers()[np.hypot(*(gen.centers() - [2, 0]).T) < 0.2]},
          "computed", "theta_rule_positions")
    o.add("axis_geodesic", "line", {"start": [1.0, 0.0], "direction": [1.0, 0.0]}, "claim")
    return Scenario("section7_combined", m, f, W, o,
                    {"K": K, "thetas": th, "levels": np.asarray(levels), "grid_n": grid_n, "delta_eq": 0.2},
                    "section7_combined", {"K": K})


def build_flat_torus(p=(0.0, 0.0)) -> Scenario:
    p = np.asarray(p, dtype=float)
    m = FlatTorus(1.0, 1.0)
    W = Window(p[0], p[0] + 1.0, p[1], p[1] + 1.0, periodic=True)
    f = dist_from_set(m, csg.PointSet(tuple(p)), W)
    cx, cy = p + 0.5
    o = OracleData()
    o.add("cut_cross", "lines", {"x": float(cx), "y": float(cy)}, "computed", "lattice_bisectors")
    o.add("edge_point", "labels", {"points": [[cx, p[1] + 0.2]], "label": "upper-singular", "in_count": 2},
          "computed", "lattice_translates")
    o.add("critical_points", "points", {"points": [[cx, cy], [cx, p[1]], [p[0], cy]],
                                        "values": [np.sqrt(0.5), 0.5, 0.5]}, "computed", "lattice_translates")
    o.add("diagonal_distance", "values", {"pairs": [[[0, 0], [0.5, 0.5]]], "values": [np.sqrt(0.5)]},
          "computed", "lattice_translates")
    return Scenario("flat_torus", m, f, W, o, {"p": p, "delta_eq": 0.2, "locus_grid": 512},
                    "flat_torus", {"p": p.tolist()})


def build_randers_wind(W=(0.5, 0.0)) -> Scenario:
    wind = np.asarray(W, dtype=float)
    m = RandersZermelo(wind)
    win = RANDERS_WINDOW
    f = dist_from_set(m, csg.PointSet((0.0, 0.0)), win)

    def travel_time(p, q):
        # smallest T >= 0 with |q - p - T W| = T
        d = np.asarray(q, float) - np.asarray(p, float)
        a = 1 - wind @ wind
        b = 2 * (d @ wind)
        c = -(d @ d)
        return float((-b + np.sqrt(b * b - 4 * a * c)) / (2 * a))

    o = OracleData()
    pairs = [[[0.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 1.0]], [[-1.0, 2.0], [2.0, 1.0]]]
    o.add("distances", "values", {"pairs": pairs, "values": [travel_time(a, b) for a, b in pairs]},
          "computed", "wind_travel_time")
    o.add("lower_points", "labels", {"points": [[0.0, 0.0]], "label": "lower-singular"}, "elementary")
    return Scenario("randers_wind", m, f, win, o, {"wind": wind}, "randers_wind", {"W": wind.tolist()})


def build_euclidean() -> Scenario:
    m = Euclidean()
    f = dist_from_set(m, csg.PointSet((0.0, 0.0)), PLAIN_WINDOW)
    o = OracleData()
    o.add("lower_points", "labels", {"points": [[0.0, 0.0]], "label": "lower-singular"}, "claim")
    o.add("values", "values", {"points": [[3.0, 0.0], [1.0, 1.0]], "values": [3.0, np.sqrt(2)]}, "elementary")
    return Scenario("euclidean", m, f, PLAIN_WINDOW, o, {"sard_exclude": 0.25}, "euclidean", {})


def build_two_point() -> Scenario:
    m = Euclidean()
    f = dist_from_set(m, csg.points_set([(-1.0, 0.0), (1.0, 0.0)]), PLAIN_WINDOW)
    o = OracleData()
    o.add("bisector", "lines", {"x": 0.0}, "computed", "perpendicular_bisector")
    o.add("critical_points", "points", {"points": [[0.0, 0.0]], "values": [1.0]}, "computed",
          "perpendicular_bisector")
    o.add("level_components", "counts", {"0.5": 2, "1.5": 1}, "computed", "circle_union_contours")
    o.add("values", "values", {"points": [[0.0, 1.0]], "values": [np.sqrt(2)]}, "elementary")
    return Scenario("two_point_dN", m, f, PLAIN_WINDOW, o, {"sard_grid": 129, "delta_eq": 0.2},
                    "two_point_dN", {})


def build_busemann() -> Scenario:
    m = Euclidean()
    f = busemann(m, (1.0, 0.0), (0.0, 0.0), PLAIN_WINDOW)
    o = OracleData()
    o.add("values", "values", {"points": [[2.0, 1.0], [-1.0, -2.0]], "values": [2.0, -1.0]}, "elementary")
    return Scenario("busemann_x", m, f, PLAIN_WINDOW, o, {}, "busemann_x", {})


def _sector_piece(m, W, a, b, K, levels, grid_n):
    if not 0 < a < b < np.pi / 2:
        raise InvalidInput("need 0 < a < b < pi/2")
    w = 0.5 * (a + b)
    th = theta_sequence(K, scale=(b - a))
    f, dN, eta, N, centers, radii, omegas, gen = _combined_field(m, W, th, w, levels, grid_n)
    return f, centers, gen.centers(), w


def _base_field(m, W):
    return combine("max", dist_from_set(m, csg.PointSet((0.0, 0.0)), W), constant(m, W, 1.0))


def build_fab_family(a: float, b: float, K: int = 8, levels=DEFAULT_LEVELS, grid_n: int = 512) -> Scenario:
    """Rotated copy of the glued construction, confined to the angular sector (a, b)."""
    m = Euclidean()
    W = SECTION7_WINDOW
    piece, ups, lows, w = _sector_piece(m, W, a, b, K, levels, grid_n)
    f = glued(piece, _base_field(m, W), Region("sectors", intervals=((a, b),)))
    object.__setattr__(f, "_frozen", False)
    f.range_estimate = (1.0, np.inf)
    f.freeze()
    o = OracleData()
    acc = 2 * _e(w)
    o.add("accumulation_points", "points", [acc], "claim")
    o.add("regular_point", "labels", {"points": [acc], "label": "regular"}, "claim")
    o.add("free_rays", "rays", {"origin": [0.0, 0.0], "from_radius": 1.0,
                                "angles": [0.0, a, b, np.pi / 2, np.pi, 1.5 * np.pi]}, "claim")
    o.add("nearby_singular", "proximity", {"point": acc, "radius": 0.2 * (b - a) / (np.pi / 4),
                                           "upper": ups, "lower": lows}, "computed", "theta_rule_positions")
    return Scenario("fab", m, f, W, o, {"a": a, "b": b, "K": K}, "fab", {"a": a, "b": b, "K": K})


def build_fab_stack(count: int = 3, K: int = 8, eps1: float = np.pi / 4, levels=DEFAULT_LEVELS,
                    grid_n: int = 512) -> Scenario:
    """Sector copies on (eps_{n+1}, eps_n), eps_n = eps1 * 2^(1-n), glued into one field."""
    m = Euclidean()
    W = SECTION7_WINDOW
    eps = eps1 * 2.0 ** -np.arange(count + 1)
    f = _base_field(m, W)
    accs, ups, lows = [], [], []
    for n in range(count):
        a, b = eps[n + 1], eps[n]
        piece, u, l, w = _sector_piece(m, W, a, b, K, levels, grid_n)
        f = glued(piece, f, Region("sectors", intervals=((a, b),)))
        accs.append(2 * _e(w))
        ups.append(u)
        lows.append(l)
    object.__setattr__(f, "_frozen", False)
    f.range_estimate = (1.0, np.inf)
    f.freeze()
    o = OracleData()
    o.add("accumulation_points", "points", accs, "claim")
    o.add("free_rays", "rays", {"origin": [0.0, 0.0], "from_radius": 1.0,
                                "angles": [0.0, eps1, np.pi / 2, np.pi]}, "claim")
    return Scenario("fab_stack", m, f, W, o, {"count": count, "K": K, "eps": eps}, "fab_stack",
                    {"count": count, "K": K})


BUILDERS = {
    "euclidean": lambda **kw: build_euclidean(),
    "two_point_dN": lambda **kw: build_two_point(),
    "busemann_x": lambda **kw: build_busemann(),
    "section7_dN": lambda **kw: build_section7_dN(kw.get("K", 8)),
    "section7_eta": lambda **kw: build_section7_eta(kw.get("K", 8)),
    "section7_combined": lambda **kw: build_section7_combined(kw.get("K", 8)),
    "flat_torus": lambda **kw: build_flat_torus(kw.get("p", (0.0, 0.0))),
    "randers_wind": lambda **kw: build_randers_wind(kw.get("W", (0.5, 0.0))),
    "fab": lambda **kw: build_fab_family(kw.get("a", np.pi / 8), kw.get("b", np.pi / 4), kw.get("K", 8)),
    "fab_stack": lambda **kw: build_fab_stack(kw.get("count", 3), kw.get("K", 8)),
}


def list_scenarios() -> list[str]:
    return sorted(BUILDERS)


def build(name: str, **params) -> Scenario:
    if name not in BUILDERS:
        raise KeyError(name)
    return BUILDERS[name](**params)


def dump(sc: Scenario) -> str:
    return json.dumps(sc.to_record(), indent=2, sort_keys=True)


def load(text_or_dict) -> Scenario:
    """Rebuild a scenario from JSON: either a builder call or an explicit metric/field record."""
    d = json.loads(text_or_dict) if isinstance(text_or_dict, str) else dict(text_or_dict)
    if d.get("builder"):
        params = d.get("params", {})
        return build(d["builder"], **params)
    if "field" not in d:
        raise InvalidInput("scenario record needs 'builder' or 'field'")
    f = field_from_dict(d["field"])
    m = metric_from_dict(d["metric"]) if "metric" in d else f.metric
    return Scenario(d.get("name", "custom"), m, f, f.window, OracleData(), d.get("config", {}), "", {})
