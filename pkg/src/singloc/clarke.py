"""Generalized differentials, critical points, critical values and level sets."""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import ConvexHull, QhullError, cKDTree
from skimage.measure import find_contours

from .errors import AlmostDistanceViolation, InvalidInput
from .fgeod import DirectionFan, direction_fan, fan_batch
from .field import ScalarField
from .metric import Euclidean, Metric, covector
from .singular import classify_points, extract_singular_locus
from .window import Window

CRITICAL_TOL = 1e-3
DEDUP_ANGLE = 1e-3


@dataclass
class Covector2:
    base: np.ndarray
    components: np.ndarray

    def __call__(self, v) -> float:
        return float(np.dot(self.components, v))


@dataclass
class ClarkeDifferential:
    base: np.ndarray
    generators: list
    hull: np.ndarray
    metric: Metric

    def points(self) -> np.ndarray:
        return np.array([g.components for g in self.generators])

    def to_record(self) -> dict:
        return {"base": np.asarray(self.base).tolist(),
                "generators": [g.components.tolist() for g in self.generators],
                "hull": self.hull.tolist()}


def _hull(pts: np.ndarray) -> np.ndarray:
    """Vertices of the convex hull in counter-clockwise order (a point or segment when degenerate)."""
    if len(pts) == 1:
        return pts.copy()
    if len(pts) >= 3:
        try:
            h = ConvexHull(pts)
            return pts[h.vertices]
        except QhullError:
            pass
    c = pts.mean(axis=0)
    u, s, vt = np.linalg.svd(pts - c)
    proj = (pts - c) @ vt[0]
    return np.array([pts[np.argmin(proj)], pts[np.argmax(proj)]])


def _fan_directions(fan: DirectionFan) -> np.ndarray:
    dirs = []
    for reps, arcs, alls in ((fan.incoming, fan.incoming_arcs, fan.incoming_all),
                             (fan.outgoing, fan.outgoing_arcs, fan.outgoing_all)):
        dirs += [np.asarray(v) for v in reps]
        # continuum clusters contribute their whole arc of directions
        if alls is not None and any(a[2] > 3 for a in arcs):
            dirs += list(np.asarray(alls))
    if not dirs:
        return np.zeros((0, 2))
    D = np.array(dirs)
    ang = np.arctan2(D[:, 1], D[:, 0])
    order = np.argsort(ang)
    keep, last = [], None
    for i in order:
        if last is None or abs(np.angle(np.exp(1j * (ang[i] - last)))) > DEDUP_ANGLE:
            keep.append(i)
            last = ang[i]
    if len(keep) > 1 and abs(np.angle(np.exp(1j * (ang[keep[0]] - ang[keep[-1]])))) <= DEDUP_ANGLE:
        keep.pop()
    return D[keep]


def generalized_differential(f: ScalarField, m: Metric, p, fan: DirectionFan | None = None,
                             angular_res: int = 720) -> ClarkeDifferential:
    """Convex hull of the covectors g_w(w, .) over the velocities w of all f-geodesics through p."""
    p = np.asarray(p, dtype=float)
    if fan is None:
        fan = direction_fan(f, m, p, angular_res=angular_res)
    D = _fan_directions(fan)
    if len(D) == 0:
        raise AlmostDistanceViolation(f"no f-geodesic through {p.tolist()}")
    C = covector(m, np.broadcast_to(p, D.shape), D)
    gens = [Covector2(p.copy(), c) for c in C]
    return ClarkeDifferential(p.copy(), gens, _hull(C), m)


def _zero_in_polygon(H: np.ndarray, eps: float = 1e-12) -> bool:
    if len(H) < 3:
        return False
    a, b = H, np.roll(H, -1, axis=0)
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    return bool(np.all(cross >= -eps) or np.all(cross <= eps))


def hull_distance(cd: ClarkeDifferential) -> float:
    """Dual-norm distance from the zero covector to the hull."""
    H = cd.hull
    if _zero_in_polygon(H):
        return 0.0
    m, x = cd.metric, cd.base
    if len(H) == 1:
        return float(m.dual_norm(x, H[0]))
    edges = [(H[0], H[1])] if len(H) == 2 else list(zip(H, np.roll(H, -1, axis=0)))
    best = np.inf
    for a, b in edges:
        if isinstance(m, Euclidean):
            ab = b - a
            t = np.clip(-(a @ ab) / max(ab @ ab, 1e-300), 0.0, 1.0)
            val = float(np.hypot(*(a + t * ab)))
        else:
            res = minimize_scalar(lambda t: float(m.dual_norm(x, a + t * (b - a))), bounds=(0.0, 1.0),
                                  method="bounded", options={"xatol": 1e-10})
            val = min(float(res.fun), float(m.dual_norm(x, a)), float(m.dual_norm(x, b)))
        best = min(best, val)
    return best


def is_critical(cd: ClarkeDifferential, tol: float = CRITICAL_TOL) -> bool:
    return hull_distance(cd) <= tol


# -- critical values -------------------------------------------------------------------

@dataclass
class CriticalValueEstimate:
    values: list
    cover_width: float
    measure_upper_bound: float
    history: list
    points: np.ndarray
    grid_n: int
    config: dict = dc_field(default_factory=dict)

    def to_record(self) -> dict:
        return {"values": [float(v) for v in self.values], "cover_width": self.cover_width,
                "measure_upper_bound": self.measure_upper_bound,
                "history": [{"cover_width": d, "bound": b} for d, b in self.history],
                "points": np.asarray(self.points).tolist(), "grid_n": self.grid_n, "config": self.config}


def cover_length(values, width: float) -> float:
    """Total length of the union of the intervals [v - width/2, v + width/2]."""
    v = np.sort(np.asarray(values, dtype=float))
    if len(v) == 0:
        return 0.0
    total, lo, hi = 0.0, v[0] - width / 2, v[0] + width / 2
    for x in v[1:]:
        if x - width / 2 <= hi:
            hi = x + width / 2
        else:
            total += hi - lo
            lo, hi = x - width / 2, x + width / 2
    return float(total + hi - lo)


def critical_points(f: ScalarField, m: Metric, P, delta: float, angular_res: int = 720,
                    tol: float = CRITICAL_TOL):
    """Critical points among P (range-interior points whose generator hull reaches zero)."""
    P = np.asarray(P, dtype=float).reshape(-1, 2)
    labels, _ = classify_points(f, m, P, delta, angular_res)
    # regular points carry a single unit covector and are never critical
    from .singular import _CODE
    cand = np.flatnonzero(labels != _CODE["regular"])
    vals = f(P[cand])
    # the infimum level is excluded (it carries no f-geodesic from below); maxima stay in
    cand = cand[vals > f.range_estimate[0] + f.cert_tol(delta)]
    crit = []
    for s in range(0, len(cand), 256):
        chunk = cand[s:s + 256]
        for k, fan in zip(chunk, fan_batch(f, m, P[chunk], delta, angular_res, keep_all=True)):
            if fan.empty:
                continue
            if is_critical(generalized_differential(f, m, P[k], fan), tol):
                crit.append(k)
    return P[np.array(crit, dtype=int)].reshape(-1, 2)


def _locus_pool(f: ScalarField, m: Metric, window: Window, grid_n: int, delta: float | None, angular_res: int):
    """Singular samples of f in the window (nodes and sub-cell points) with their generators."""
    g = extract_singular_locus(f, m, window=window, grid_n=grid_n, delta=delta, angular_res=angular_res)
    S = np.concatenate([g.locus_points("upper-singular"), g.locus_points("lower-singular")])
    d = g.spacing if delta is None else delta
    X, C = [], []
    for s in range(0, len(S), 256):
        chunk = S[s:s + 256]
        for x, fan in zip(chunk, fan_batch(f, m, chunk, d, angular_res, keep_all=True)):
            D = _fan_directions(fan)
            if len(D):
                X.append(np.broadcast_to(x, D.shape))
                C.append(covector(m, np.broadcast_to(x, D.shape), D))
    if not X:
        return np.zeros((0, 2)), np.zeros((0, 2)), np.zeros((0, 2)), g.spacing
    return S, np.concatenate(X), np.concatenate(C), g.spacing


def _near_hull_distances(m: Metric, S, X, C, r: float) -> np.ndarray:
    """Hull distance of the generators collected within r of each sample (a Clarke-style neighbourhood)."""
    tree = cKDTree(X)
    out = np.full(len(S), np.inf)
    for k, idx in enumerate(tree.query_ball_point(S, r)):
        if idx:
            out[k] = hull_distance(ClarkeDifferential(S[k], [], _hull(C[idx]), m))
    return out


def _zoom(f: ScalarField, m: Metric, q, h: float, acc: float, angular_res: int, tol: float, n: int = 17):
    while h > acc:
        w = Window(q[0] - 2 * h, q[0] + 2 * h, q[1] - 2 * h, q[1] + 2 * h)
        S, X, C, h = _locus_pool(f, m, w, n, None, angular_res)
        if len(S) == 0:
            return None
        hd = _near_hull_distances(m, S, X, C, 2 * h)
        k = int(np.argmin(hd))
        if hd[k] > tol:
            return None
        q = S[k]
    return q


def estimate_critical_values(f: ScalarField, m: Metric, window: Window | None = None, grid_n: int = 129,
                             delta_cover: float = 1e-2, refinements: int = 3, delta: float | None = None,
                             angular_res: int = 720, tol: float = CRITICAL_TOL) -> CriticalValueEstimate:
    """Cover the critical values found on the singular locus by intervals of width delta_cover.

    Critical points are seeded where the generators gathered within two grid spacings of a singular
    sample surround zero, then pinned down by re-extracting the locus on shrinking windows until the
    value is accurate to an eighth of the finest cover width. The cover is recomputed for
    delta_cover / 2**k, k < refinements, and the trend is kept as history.
    """
    if grid_n < 16:
        raise InvalidInput("grid_n must be >= 16")
    if not delta_cover > 0:
        raise InvalidInput("cover width must be positive")
    window = f.window if window is None else window
    refinements = max(refinements, 1)
    acc = delta_cover / 2 ** (refinements - 1) / 8
    S, X, C, spacing = _locus_pool(f, m, window, grid_n, delta, angular_res)
    found = []
    if len(S):
        hd = _near_hull_distances(m, S, X, C, 2 * spacing)
        seeds = np.flatnonzero(hd <= tol)
        # one zoom per cluster of seeds, started from its best sample
        taken = np.zeros(len(S), dtype=bool)
        tree = cKDTree(S)
        for k in seeds[np.argsort(hd[seeds], kind="stable")]:
            if taken[k]:
                continue
            taken[tree.query_ball_point(S[k], 4 * spacing)] = True
            q = _zoom(f, m, S[k], spacing, acc, angular_res, tol)
            if q is not None:
                found.append(q)
    P = np.array(found).reshape(-1, 2)
    vals = f(P) if len(P) else np.zeros(0)
    # the infimum level is excluded (it carries no f-geodesic from below); maxima stay in
    keep = vals > f.range_estimate[0] + 2 * acc
    P, vals = P[keep], vals[keep]
    values = sorted(float(v) for v in vals)
    history = [(delta_cover / 2 ** k, cover_length(values, delta_cover / 2 ** k)) for k in range(refinements)]
    cfg = {"grid_n": grid_n, "delta": spacing if delta is None else delta, "angular_res": angular_res,
           "tol": tol, "value_accuracy": acc, "window": window.to_list()}
    return CriticalValueEstimate(values, float(delta_cover), history[0][1], history, P, grid_n, cfg)


def edge_critical_covers(f: ScalarField, m: Metric, graph, delta_cover: float, samples: int = 64,
                         delta: float | None = None, tol: float = CRITICAL_TOL) -> list[dict]:
    """Critical-value covers restricted to each extracted singular edge."""
    delta = graph.spacing if delta is None else delta
    out = []
    for k, e in enumerate(graph.edges):
        poly = np.asarray(e["polyline"])
        s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(poly, axis=0).T))])
        if s[-1] <= 0:
            continue
        t = np.linspace(0.0, s[-1], samples)
        Q = np.column_stack([np.interp(t, s, poly[:, 0]), np.interp(t, s, poly[:, 1])])
        C = critical_points(f, m, Q, delta, tol=tol)
        vals = f(C) if len(C) else np.zeros(0)
        out.append({"edge": k, "critical_values": [float(v) for v in vals],
                    "bound": cover_length(vals, delta_cover)})
    return out


# -- level sets ------------------------------------------------------------------------

@dataclass
class LevelSet:
    value: float
    components: list
    regular: list
    spacing: float
    max_deviation: float

    def to_record(self) -> dict:
        return {"value": self.value, "spacing": self.spacing, "max_deviation": self.max_deviation,
                "components": [{"polyline": np.asarray(c).tolist(), "regular": bool(r)}
                               for c, r in zip(self.components, self.regular)]}


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def polyline_is_simple(poly: np.ndarray) -> bool:
    """No two non-adjacent segments cross."""
    from scipy.spatial import cKDTree

    poly = np.asarray(poly)
    n = len(poly) - 1
    if n < 3:
        return True
    mids = 0.5 * (poly[:-1] + poly[1:])
    lens = np.hypot(*np.diff(poly, axis=0).T)
    tree = cKDTree(mids)
    closed = np.allclose(poly[0], poly[-1])
    for i, j in tree.query_pairs(float(lens.max()) * 1.01):
        if abs(i - j) <= 1 or (closed and {i, j} == {0, n - 1}):
            continue
        if _segments_cross(poly[i], poly[i + 1], poly[j], poly[j + 1]):
            return False
    return True


def polylines_disjoint(a: np.ndarray, b: np.ndarray, gap: float) -> bool:
    from scipy.spatial import cKDTree

    return bool(cKDTree(a).query(b)[0].min() >= gap)


def extract_level_set(f: ScalarField, window: Window | None = None, grid_n: int = 257, t: float = 0.0,
                      m: Metric | None = None, critical=None, angular_res: int = 720) -> LevelSet:
    """Marching-squares contour of f at t; components near a critical grid point are flagged."""
    window = f.window if window is None else window
    lo, hi = f.range_estimate
    if not lo < t < hi:
        raise InvalidInput(f"level {t} is not inside the range ({lo}, {hi})")
    m = f.metric if m is None else m
    P = window.grid(grid_n)
    spacing = window.spacing(grid_n)
    V = f(P)
    xs, ys = window.axes(grid_n)
    comps = []
    for c in find_contours(V, t):
        # contour coordinates are (row, col) in grid units
        pts = np.column_stack([np.interp(c[:, 1], np.arange(grid_n), xs),
                               np.interp(c[:, 0], np.arange(grid_n), ys)])
        comps.append(pts)
    if critical is None:
        near = np.abs(V - t) <= 3 * spacing
        critical = critical_points(f, m, P[near], spacing, angular_res)
    critical = np.asarray(critical, dtype=float).reshape(-1, 2)
    regular = []
    for c in comps:
        if len(critical):
            dmin = np.min(np.hypot(*(c[:, None, :] - critical[None, :, :]).transpose(2, 0, 1)))
            ok = dmin > 2 * spacing
        else:
            ok = True
        regular.append(bool(ok and polyline_is_simple(c)))
    dev = max((float(np.abs(f(c) - t).max()) for c in comps), default=0.0)
    return LevelSet(float(t), comps, regular, spacing, dev)


# -- chain rule along the singular locus ---------------------------------------------

def chain_rule_check(f: ScalarField, m: Metric, curve, t0: float, h: float = 1e-5,
                     delta: float | None = None, angular_res: int = 720) -> float:
    """max over f-geodesics through c(t0) of |(f o c)'(t0) - g_w(w, c'(t0))|."""
    c = curve if callable(curve) else _polyline_curve(np.asarray(curve, dtype=float))
    p = np.asarray(c(t0), dtype=float)
    dc = (np.asarray(c(t0 + h)) - np.asarray(c(t0 - h))) / (2 * h)
    dfc = (float(f(np.asarray(c(t0 + h)))) - float(f(np.asarray(c(t0 - h))))) / (2 * h)
    fan = direction_fan(f, m, p, delta, angular_res)
    D = [np.asarray(v) for v in fan.incoming + fan.outgoing]
    if not D:
        raise AlmostDistanceViolation(f"no f-geodesic through {p.tolist()}")
    return float(max(abs(dfc - covector(m, p, w) @ dc) for w in D))


def _polyline_curve(poly: np.ndarray):
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(poly, axis=0).T))])

    def c(t):
        return np.array([np.interp(t, s, poly[:, 0]), np.interp(t, s, poly[:, 1])])

    return c
