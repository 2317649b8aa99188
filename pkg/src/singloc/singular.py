"""Singular loci: point classification, locus graphs, intrinsic metric and
the local structure checks (tree property, cut-locus equivalence,
reconstruction from the minimum level, first-variation limits).
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import networkx as nx
import numpy as np
from scipy.ndimage import distance_transform_edt
from scipy.spatial import cKDTree
from skimage.draw import polygon
from skimage.measure import find_contours
from skimage.morphology import skeletonize

from .errors import InvalidInput
from .fgeod import (DirectionFan, FGeodesicCertificate, _probe_points, _unit_dirs, certify_f_geodesic, direction_fan,
                    fan_batch, gradient_direction)
from .field import FunctionField, ScalarField
from .geodesic import straight_segment
from .metric import Euclidean, Metric, covector
from .window import Window

LABELS = ("regular", "upper-singular", "lower-singular", "range-boundary", "undetermined")
_CODE = {name: k for k, name in enumerate(LABELS)}
ALIGN_TOL = 1e-2


@dataclass
class PointClass:
    label: str
    fan: DirectionFan
    multiplicity: tuple

    def to_record(self):
        return {"label": self.label, "multiplicity": list(self.multiplicity), "fan": self.fan.to_record()}


def _label_from_fan(f: ScalarField, p, fan: DirectionFan, value: float) -> str:
    n_in, n_out = fan.counts
    if n_in == 0 and n_out == 0:
        lo, hi = f.range_estimate
        tol = f.cert_tol(fan.delta)
        return "range-boundary" if (value <= lo + tol or value >= hi - tol) else "undetermined"
    if n_out == 0:
        return "upper-singular"
    if n_in == 0:
        return "lower-singular"
    if n_in == 1 and n_out == 1:
        if np.hypot(*(np.asarray(fan.incoming[0]) - np.asarray(fan.outgoing[0]))) <= ALIGN_TOL:
            return "regular"
    return "undetermined"


def classify_point(f: ScalarField, m: Metric, p, delta: float | None = None,
                   angular_res: int = 720) -> PointClass:
    p = np.asarray(p, dtype=float)
    fan = direction_fan(f, m, p, delta, angular_res)
    return PointClass(_label_from_fan(f, p, fan, float(f(p))), fan, fan.counts)


def classify_points(f: ScalarField, m: Metric, P, delta: float, angular_res: int = 720,
                    screen: bool = True, return_dirs: bool = False):
    """Labels for many points; smooth points are settled by a probe along the gradient."""
    P = np.asarray(P, dtype=float).reshape(-1, 2)
    v = np.full(P.shape, np.nan)
    labels = np.full(len(P), _CODE["undetermined"], dtype=np.int8)
    counts = np.zeros((len(P), 2), dtype=np.int16)
    todo = np.ones(len(P), dtype=bool)
    tol = f.cert_tol(delta)
    if screen:
        fP = f(P)
        v = np.asarray(m.legendre(P, f.differential(P)), dtype=float)
        r_out = delta - (f(_probe_points(m, P, v, delta, "out")) - fP)
        r_in = delta - (fP - f(_probe_points(m, P, v, delta, "in")))
        smooth = (r_out <= tol) & (r_in <= tol) & np.all(np.isfinite(v), axis=-1)
        labels[smooth] = _CODE["regular"]
        counts[smooth] = (1, 1)
        todo = ~smooth
    idx = np.flatnonzero(todo)
    if m.straight and len(idx):
        empty = _empty_fans(f, m, P[idx], delta, tol)
        lo, hi = f.range_estimate
        vals = f(P[idx[empty]])
        at_bound = (vals <= lo + tol) | (vals >= hi - tol)
        labels[idx[empty]] = np.where(at_bound, _CODE["range-boundary"], _CODE["undetermined"])
        idx = idx[~empty]
    for s in range(0, len(idx), 512):
        chunk = idx[s:s + 512]
        fans = fan_batch(f, m, P[chunk], delta, angular_res)
        vals = f(P[chunk])
        for k, fan, val in zip(chunk, fans, vals):
            labels[k] = _CODE[_label_from_fan(f, P[k], fan, float(val))]
            counts[k] = fan.counts
    if return_dirs:
        return labels, counts, v
    return labels, counts


def _empty_fans(f: ScalarField, m: Metric, P, delta: float, tol: float, k: int = 32):
    """True where no stub of length delta can exist, proved from k probes per sense.

    For a straight translation-invariant metric the gain along any direction exceeds the gain
    along the nearest probe direction by at most the metric length of the difference of the two
    probe ends, so small gains in every probe direction rule out a stub.
    """
    ang = 2 * np.pi * np.arange(k) / k
    U = _unit_dirs(m, P[:, None, :], ang[None, :])
    # worst metric length between neighbouring probe ends, over half a bin on either side
    half = np.linspace(-np.pi / k, np.pi / k, 9)
    W = _unit_dirs(m, P[:, None, None, :], ang[None, :, None] + half[None, None, :])
    gap = delta * np.maximum(m.norm(np.broadcast_to(P[:, None, None, :], W.shape), W - U[:, :, None, :]),
                             m.norm(np.broadcast_to(P[:, None, None, :], W.shape), U[:, :, None, :] - W))
    slack = gap.max(axis=(1, 2))
    fP = f(P)
    out = (f(P[:, None, :] + delta * U) - fP[:, None]).max(axis=1)
    inc = (fP[:, None] - f(P[:, None, :] - delta * U)).max(axis=1)
    return (out + slack < delta - tol) & (inc + slack < delta - tol)


def _run_ends(f: ScalarField, X, V, sense: str, tmax: float, iters: int = 24):
    """Far end of the certified straight run from X along +V (out) or -V (in)."""
    fX = f(X)
    sgn = 1.0 if sense == "out" else -1.0
    lo = np.zeros(len(X))
    hi = np.full(len(X), tmax)
    for _ in range(iters):
        t = 0.5 * (lo + hi)
        gain = sgn * (f(X + sgn * t[:, None] * V) - fX)
        ok = gain >= t - (1e-9 + 1e-6 * t)
        lo = np.where(ok, t, lo)
        hi = np.where(ok, hi, t)
    return X + sgn * lo[:, None] * V


def _dirs(f: ScalarField, m: Metric, X):
    return np.asarray(m.legendre(X, f.differential(X)), dtype=float)


def _edge_kinks(f: ScalarField, m: Metric, P, V, regular, delta: float, periodic: bool, angular_res: int,
                tmax: float, iters: int = 40):
    """Sub-cell singular points on grid edges crossed by the locus (straight-line metrics).

    Along a branch the far ends of the certified runs through neighbouring nodes move together; an
    edge whose end jump clearly exceeds that of its collinear neighbours is crossed by the locus. The
    crossing is bracketed by bisection on which end a point runs into, pinned down by comparing the
    residuals of the two branch directions, and finally classified with a full fan.
    """
    n = P.shape[0]
    spacing = float(P[1, 1, 0] - P[0, 0, 0])
    gstep = f.grad_step
    flat_v = V.reshape(-1, 2)
    ok_nodes = regular.ravel() & np.all(np.isfinite(flat_v), axis=-1)
    ends = {}
    for sense in ("in", "out"):
        E = np.full((n * n, 2), np.nan)
        idx = np.flatnonzero(ok_nodes)
        E[idx] = _run_ends(f, P.reshape(-1, 2)[idx], flat_v[idx], sense, tmax)
        ends[sense] = E.reshape(n, n, 2)
    cands = []
    for axis in (0, 1):
        shift = lambda A, k: np.roll(A, -k, axis=axis)
        ok = regular & shift(regular, 1)
        if not periodic:
            border = np.ones_like(ok)
            if axis == 0:
                border[-1, :] = False
            else:
                border[:, -1] = False
            ok &= border
        for sense in ("in", "out"):
            E = ends[sense]
            d = np.hypot(*np.moveaxis(shift(E, 1) - E, -1, 0))
            d = np.where(ok & np.isfinite(d), d, 0.0)
            nb = np.minimum(shift(d, -1), shift(d, 1))
            cand = ok & (d > 3 * nb + 1e-3 * spacing)
            for i, j in np.argwhere(cand):
                cands.append((i, j, axis, sense, "end"))
        # near-parallel branches barely move the ends but change the turning rate of the directions
        ang = np.arctan2(V[..., 1], V[..., 0])
        da = np.angle(np.exp(1j * (shift(ang, 1) - ang)))
        da = np.where(ok, da, np.nan)
        prev, nxt = shift(da, -1), shift(da, 1)
        tau = np.pi / angular_res / 2 + 0.5 * np.fmax(np.fmax(np.abs(prev), np.abs(nxt)), np.abs(da))
        jump = (np.abs(da - prev) > tau) | (np.abs(da - nxt) > tau)
        jump &= ok & np.isfinite(da)
        for i, j in np.argwhere(jump):
            cands.append((i, j, axis, "in", "dir"))
            cands.append((i, j, axis, "out", "dir"))
    if not cands:
        return np.zeros((0, 2)), np.zeros(0, dtype=np.int8)
    cands = sorted(set(cands))
    C = np.array([c[:3] for c in cands])
    senses = np.array([c[3] for c in cands])
    by_dir = np.array([c[4] == "dir" for c in cands])
    step = np.where(C[:, 2:3] == 0, [[0.0, 1.0]], [[1.0, 0.0]]) * spacing
    A = P[C[:, 0], C[:, 1]]
    ib, jb = C[:, 0].copy(), C[:, 1].copy()
    ib[C[:, 2] == 0] = (ib[C[:, 2] == 0] + 1) % n
    jb[C[:, 2] == 1] = (jb[C[:, 2] == 1] + 1) % n
    Ea = np.where(senses[:, None] == "in", ends["in"][C[:, 0], C[:, 1]], ends["out"][C[:, 0], C[:, 1]])
    Eb = np.where(senses[:, None] == "in", ends["in"][ib, jb], ends["out"][ib, jb])
    ang_a = np.arctan2(V[C[:, 0], C[:, 1], 1], V[C[:, 0], C[:, 1], 0])
    ang_b = np.arctan2(V[ib, jb, 1], V[ib, jb, 0])
    lo, hi = np.zeros(len(A)), np.ones(len(A))
    # coarse bracketing until the interval is inside the finite-difference blend zone
    while np.any((hi - lo) * spacing > 4 * gstep):
        t = 0.5 * (lo + hi)
        X = A + t[:, None] * step
        Vx = _dirs(f, m, X)
        Ex = np.empty_like(X)
        for sense in ("in", "out"):
            sel = senses == sense
            if sel.any():
                Ex[sel] = _run_ends(f, X[sel], Vx[sel], sense, tmax)
        a_side = np.hypot(*(Ex - Ea).T) <= np.hypot(*(Ex - Eb).T)
        # a turning-rate candidate is bracketed on which node direction the point is closer to
        ang_x = np.arctan2(Vx[:, 1], Vx[:, 0])
        a_dir = np.abs(np.angle(np.exp(1j * (ang_x - ang_a)))) <= np.abs(np.angle(np.exp(1j * (ang_x - ang_b))))
        a_side = np.where(by_dir, a_dir, a_side)
        lo = np.where(a_side, t, lo)
        hi = np.where(a_side, hi, t)
    unit = step / spacing
    Xa = A + lo[:, None] * step - 2 * gstep * unit
    Xb = A + hi[:, None] * step + 2 * gstep * unit
    va, vb = _dirs(f, m, Xa), _dirs(f, m, Xb)
    lo2, hi2 = lo * spacing - 2 * gstep, hi * spacing + 2 * gstep
    for _ in range(iters):
        t = 0.5 * (lo2 + hi2)
        X = A + t[:, None] * unit
        fX = f(X)
        ra = np.empty(len(X))
        rb = np.empty(len(X))
        for sense in ("in", "out"):
            sel = senses == sense
            if sel.any():
                ra[sel] = delta - _gain(f, m, X[sel], fX[sel], va[sel], delta, sense)
                rb[sel] = delta - _gain(f, m, X[sel], fX[sel], vb[sel], delta, sense)
        a_side = ra <= rb
        lo2 = np.where(a_side, t, lo2)
        hi2 = np.where(a_side, hi2, t)
    X = A + (0.5 * (lo2 + hi2))[:, None] * unit
    # a genuine crossing carries both branch stubs, resolvably apart
    fX = f(X)
    tol = f.cert_tol(delta)
    ra = np.empty(len(X))
    rb = np.empty(len(X))
    for sense in ("in", "out"):
        sel = senses == sense
        if sel.any():
            ra[sel] = delta - _gain(f, m, X[sel], fX[sel], va[sel], delta, sense)
            rb[sel] = delta - _gain(f, m, X[sel], fX[sel], vb[sel], delta, sense)
    apart = np.abs(np.angle(np.exp(1j * (np.arctan2(vb[:, 1], vb[:, 0]) - np.arctan2(va[:, 1], va[:, 0])))))
    good = (ra <= tol) & (rb <= tol) & (apart >= np.pi / angular_res)
    X = X[good]
    if len(X):
        _, first = np.unique(np.round(X / (1e-6 * spacing)), axis=0, return_index=True)
        X = X[np.sort(first)]
    labels = np.full(len(X), _CODE["undetermined"], dtype=np.int8)
    vals = f(X)
    for s in range(0, len(X), 512):
        fans = fan_batch(f, m, X[s:s + 512], delta, angular_res)
        for k, fan in enumerate(fans):
            labels[s + k] = _CODE[_label_from_fan(f, X[s + k], fan, float(vals[s + k]))]
    keep = np.isin(labels, [_CODE["upper-singular"], _CODE["lower-singular"]])
    return X[keep], labels[keep]


def _gain(f, m, X, fX, v, delta, sense):
    q = _probe_points(m, X, v, delta, sense)
    return f(q) - fX if sense == "out" else fX - f(q)


# -- graphs --------------------------------------------------------------------------

_NB8 = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def _pixel_graph(mask: np.ndarray, P: np.ndarray, m: Metric, periodic: bool) -> nx.Graph:
    n0, n1 = mask.shape
    G = nx.Graph()
    pix = list(zip(*np.nonzero(mask)))
    on = set(pix)

    def nb(r, c, dr, dc):
        rr, cc = r + dr, c + dc
        if periodic:
            return rr % n0, cc % n1
        if 0 <= rr < n0 and 0 <= cc < n1:
            return rr, cc
        return None

    for r, c in pix:
        G.add_node((r, c), pos=P[r, c])
    for r, c in pix:
        for dr, dc in _NB8:
            q = nb(r, c, dr, dc)
            if q is None or q not in on or q <= (r, c):
                continue
            if dr and dc:
                # drop a diagonal link when a 4-neighbour path already joins the pair
                a, b = nb(r, c, dr, 0), nb(r, c, 0, dc)
                if (a is not None and a in on) or (b is not None and b in on):
                    continue
            w = 0.5 * float(m.dist(P[r, c], P[q]) + m.dist(P[q], P[r, c]))
            G.add_edge((r, c), q, weight=w)
    return G


@dataclass
class SingularGraph:
    vertices: list
    edges: list
    components: list
    pixel_graphs: dict
    points: dict
    spacing: float
    grid_n: int
    window: Window
    metric: Metric
    undetermined_fraction: float
    label_counts: dict
    config: dict = dc_field(default_factory=dict)

    def locus_points(self, label: str = "upper-singular") -> np.ndarray:
        return self.points.get(label, np.zeros((0, 2)))

    def to_record(self) -> dict:
        return {
            "vertices": [{"id": k, "point": np.asarray(v["point"]).tolist(), "label": v["label"],
                          "degree": v["degree"], "component": v["component"]}
                         for k, v in enumerate(self.vertices)],
            "edges": [{"u": e["u"], "v": e["v"], "label": e["label"], "length": e["length"],
                       "polyline": np.asarray(e["polyline"]).tolist()} for e in self.edges],
            "components": self.components,
            "grid_n": self.grid_n, "spacing": self.spacing,
            "undetermined_fraction": self.undetermined_fraction,
            "label_counts": self.label_counts,
        }


def _simplify(G: nx.Graph, label: str, spacing: float, m: Metric, comp_offset: int):
    """Collapse a pixel graph into vertices (ends, junctions) and polyline edges."""
    vertices, edges, comps = [], [], []
    for ci, comp in enumerate(nx.connected_components(G)):
        H = G.subgraph(comp)
        pos = np.array([H.nodes[u]["pos"] for u in H.nodes])
        cid = comp_offset + ci
        comps.append({"id": cid, "label": label, "pixels": len(comp)})
        if len(comp) == 1 or np.ptp(pos, axis=0).max() <= 2.5 * spacing:
            vertices.append({"point": pos.mean(axis=0), "label": label, "degree": 0, "component": cid})
            continue
        deg = dict(H.degree())
        special = {u for u, d in deg.items() if d != 2}
        # junction clusters: adjacent pixels of degree >= 3 become one vertex
        J = H.subgraph([u for u in special if deg[u] >= 3])
        rep = {}
        for cl in nx.connected_components(J):
            cl = sorted(cl)
            vid = len(vertices)
            vertices.append({"point": np.mean([H.nodes[u]["pos"] for u in cl], axis=0), "label": label,
                             "degree": 0, "component": cid})
            for u in cl:
                rep[u] = vid
        for u in sorted(special):
            if deg[u] < 3:
                rep[u] = len(vertices)
                vertices.append({"point": H.nodes[u]["pos"], "label": label, "degree": 0, "component": cid})
        if not rep:
            u = min(H.nodes)
            rep[u] = len(vertices)
            vertices.append({"point": H.nodes[u]["pos"], "label": label, "degree": 0, "component": cid})
        seen = set()
        for u in sorted(rep):
            for w in sorted(H.neighbors(u)):
                if (u, w) in seen or rep.get(w) is not None and rep[w] == rep[u]:
                    continue
                chain = [u, w]
                prev, cur = u, w
                while cur not in rep:
                    nxt = [x for x in sorted(H.neighbors(cur)) if x != prev]
                    if not nxt:
                        break
                    prev, cur = cur, nxt[0]
                    chain.append(cur)
                seen.add((u, chain[1]))
                seen.add((chain[-1], chain[-2]))
                pts = np.array([H.nodes[x]["pos"] for x in chain])
                length = float(sum(H.edges[a, b]["weight"] for a, b in zip(chain[:-1], chain[1:])))
                a, b = rep[u], rep.get(chain[-1], rep[u])
                vertices[a]["degree"] += 1
                vertices[b]["degree"] += 1
                edges.append({"u": a, "v": b, "label": label, "length": length, "polyline": pts})
    return vertices, edges, comps


def extract_singular_locus(f: ScalarField, m: Metric, window: Window | None = None, grid_n: int = 512,
                           delta: float | None = None, angular_res: int = 720) -> SingularGraph:
    if grid_n < 16:
        raise InvalidInput("grid_n must be >= 16")
    window = f.window if window is None else window
    spacing = window.spacing(grid_n)
    delta = spacing if delta is None else float(delta)
    P = window.grid(grid_n)
    labels, counts, V = classify_points(f, m, P.reshape(-1, 2), delta, angular_res, return_dirs=True)
    L = labels.reshape(grid_n, grid_n)
    periodic = window.periodic and m.periods is not None
    regular = L == _CODE["regular"]
    if m.straight:
        K, KL = _edge_kinks(f, m, P, V.reshape(grid_n, grid_n, 2), regular, delta, periodic, angular_res,
                            window.diagonal)
    else:
        K, KL = np.zeros((0, 2)), np.zeros(0, dtype=np.int8)
    # located points mark the nearest grid node
    x0, y0 = P[0, 0]
    cols = np.rint((K[:, 0] - x0) / spacing).astype(int)
    rows = np.rint((K[:, 1] - y0) / spacing).astype(int)
    if periodic:
        cols %= grid_n
        rows %= grid_n
    inside = (cols >= 0) & (cols < grid_n) & (rows >= 0) & (rows < grid_n)
    vertices, edges, comps, pgs, pts = [], [], [], {}, {}
    for label in ("upper-singular", "lower-singular"):
        mask = L == _CODE[label]
        sel = inside & (KL == _CODE[label])
        mask[rows[sel], cols[sel]] = True
        pts[label] = np.concatenate([P[L == _CODE[label]], K[KL == _CODE[label]]])
        if not mask.any():
            pgs[label] = nx.Graph()
            continue
        if periodic:
            w = 8
            big = np.pad(mask, w, mode="wrap")
            sk = skeletonize(big)[w:-w, w:-w]
        else:
            sk = skeletonize(mask)
        G = _pixel_graph(sk, P, m, periodic)
        if G.number_of_nodes():
            keys = list(G.nodes)
            vals = f(np.array([G.nodes[u]["pos"] for u in keys]))
            nx.set_node_attributes(G, dict(zip(keys, (float(v) for v in vals))), "value")
        pgs[label] = G
        off = len(vertices)
        v, e, c = _simplify(G, label, spacing, m, len(comps))
        for ed in e:
            ed["u"] += off
            ed["v"] += off
        vertices += v
        edges += e
        comps += c
    interior = np.isin(labels, [_CODE["regular"], _CODE["upper-singular"], _CODE["lower-singular"],
                                _CODE["undetermined"]])
    und = float((labels == _CODE["undetermined"]).sum() / max(int(interior.sum()), 1))
    lc = {name: int((labels == k).sum()) for name, k in _CODE.items()}
    lc["located-upper"] = int((KL == _CODE["upper-singular"]).sum())
    lc["located-lower"] = int((KL == _CODE["lower-singular"]).sum())
    cfg = {"grid_n": grid_n, "delta": delta, "angular_res": angular_res, "window": window.to_list(),
           "range": [float(v) for v in f.range_estimate]}
    return SingularGraph(vertices, edges, comps, pgs, pts, spacing, grid_n, window, m, und, lc, cfg)


def label_grid(f: ScalarField, m: Metric, window: Window, grid_n: int, delta: float | None = None,
               angular_res: int = 720):
    spacing = window.spacing(grid_n)
    P = window.grid(grid_n)
    labels, _ = classify_points(f, m, P.reshape(-1, 2), spacing if delta is None else delta, angular_res)
    return P, labels.reshape(grid_n, grid_n)


# -- intrinsic metric and tree structure ----------------------------------------------

def _pixel_union(g: SingularGraph) -> nx.Graph:
    U = nx.Graph()
    for label, G in g.pixel_graphs.items():
        U.add_nodes_from(((label, u), d) for u, d in G.nodes(data=True))
        U.add_edges_from(((label, a), (label, b), d) for a, b, d in G.edges(data=True))
    return U


def _nearest_node(g: SingularGraph, U: nx.Graph, q):
    nodes = list(U.nodes)
    pos = np.array([U.nodes[u]["pos"] for u in nodes])
    d = g.metric.dist(pos, np.broadcast_to(np.asarray(q, float), pos.shape)) if g.metric.analytic else \
        np.hypot(*(pos - q).T)
    k = int(np.argmin(d))
    return nodes[k], float(d[k])


def intrinsic_distance(g: SingularGraph, q1, q2) -> float:
    """Length of the shortest path inside the locus; inf across components."""
    U = _pixel_union(g)
    if U.number_of_nodes() == 0:
        raise InvalidInput("empty singular graph")
    a, da = _nearest_node(g, U, q1)
    b, db = _nearest_node(g, U, q2)
    if max(da, db) > 2 * g.spacing:
        raise InvalidInput("query point is not on the singular graph")
    try:
        return float(nx.shortest_path_length(U, a, b, weight="weight"))
    except nx.NetworkXNoPath:
        return float("inf")


@dataclass
class TreeReport:
    balls_tested: int
    cycles_found: int
    connectivity_failures: int
    max_distortion: float
    radius: float
    passed: bool


def _ambient(m: Metric, a, b):
    return np.asarray(0.5 * (m.dist(a, b) + m.dist(b, a))) if m.analytic else np.hypot(*(np.asarray(a) - b).T)


def _cell(u):
    # union graphs key nodes by (label, (row, col))
    return u[1] if isinstance(u[0], str) else u


def _clearance(g: SingularGraph) -> np.ndarray:
    """Distance in cells from each grid node to the nearest locus cell."""
    mask = np.zeros((g.grid_n, g.grid_n), dtype=bool)
    for G in g.pixel_graphs.values():
        for u in G.nodes:
            mask[u] = True
    if not mask.any():
        return np.full(mask.shape, np.inf)
    return distance_transform_edt(~mask)


def _encloses_free_cell(cyc, clearance: np.ndarray, free: float = 1.5) -> bool:
    """Whether the cycle surrounds a grid node farther than `free` cells from the locus.

    Two branches closer than a couple of cells merge into thin ladders under thinning; such a cycle
    encloses no free node and is below the grid's resolution.
    """
    rc = np.array([_cell(u) for u in cyc])
    if np.any(np.abs(np.diff(np.vstack([rc, rc[:1]]), axis=0)) > 1):
        return True  # wraps around a periodic window
    rr, cc = polygon(rc[:, 0], rc[:, 1], clearance.shape)
    return bool(len(rr)) and bool(np.any(clearance[rr, cc] > free))


def verify_local_tree(g: SingularGraph, ball_radius: float, ball_samples: int = 50, seed: int = 0,
                      label: str | None = None) -> TreeReport:
    if not ball_radius > 4 * g.spacing:
        raise InvalidInput("ball radius must exceed 4 grid spacings")
    U = _pixel_union(g) if label is None else g.pixel_graphs.get(label, nx.Graph())
    # the statement concerns levels strictly inside the range; within one probe length of an
    # extreme level the stubs run into the extreme set and the labels carry no information
    lo, hi = g.config.get("range", (-np.inf, np.inf))
    band = g.config.get("delta", g.spacing)
    U = U.subgraph([u for u, v in U.nodes(data="value", default=0.0) if lo + band < v < hi - band])
    nodes = list(U.nodes)
    if not nodes:
        return TreeReport(0, 0, 0, 0.0, ball_radius, True)
    pos = np.array([U.nodes[u]["pos"] for u in nodes])
    rng = np.random.default_rng(seed)
    centers = rng.choice(len(nodes), size=min(ball_samples, len(nodes)), replace=len(nodes) < ball_samples)
    cycles = fails = 0
    distortion = 1.0
    small = 3.0 * g.spacing
    clearance = _clearance(g)
    for c in centers:
        d = _ambient(g.metric, pos, np.broadcast_to(pos[c], pos.shape))
        inside = [nodes[k] for k in np.flatnonzero(d <= ball_radius)]
        H = U.subgraph(inside)
        for cyc in nx.cycle_basis(H):
            cp = np.array([H.nodes[u]["pos"] for u in cyc])
            span = float(np.max(_ambient(g.metric, cp[:, None, :], cp[None, :, :])))
            if span > small and _encloses_free_cell(cyc, clearance):
                cycles += 1
        # points close in the ambient metric must be close inside the locus
        sub = np.flatnonzero(d <= 0.5 * ball_radius)
        pick = rng.choice(sub, size=min(6, len(sub)), replace=False)
        for i in pick:
            lengths = nx.single_source_dijkstra_path_length(H, nodes[i], cutoff=8 * g.spacing, weight="weight")
            di = _ambient(g.metric, pos[sub], np.broadcast_to(pos[i], pos[sub].shape))
            for k, dk in zip(sub, di):
                if dk <= 1.5 * g.spacing and nodes[k] not in lengths:
                    fails += 1
                elif nodes[k] in lengths and dk > g.spacing:
                    distortion = max(distortion, lengths[nodes[k]] / dk)
    return TreeReport(len(centers), cycles, fails, float(distortion), ball_radius, cycles == 0 and fails == 0)


# -- local cut-locus equivalence ------------------------------------------------------

def _level_curves(f: ScalarField, center, half: float, level: float, n: int = 257, refine: float = 1e-4):
    """Points on {f = level} near center, densified and projected onto the level set."""
    xs = np.linspace(center[0] - half, center[0] + half, n)
    ys = np.linspace(center[1] - half, center[1] + half, n)
    X, Y = np.meshgrid(xs, ys)
    Z = f(np.stack([X, Y], axis=-1))
    polys = []
    hx, hy = xs[1] - xs[0], ys[1] - ys[0]
    for c in find_contours(Z, level):
        pts = np.column_stack([xs[0] + c[:, 1] * hx, ys[0] + c[:, 0] * hy])
        seg = np.hypot(*np.diff(pts, axis=0).T)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        if s[-1] == 0:
            continue
        k = max(int(np.ceil(s[-1] / refine)), 2)
        si = np.linspace(0, s[-1], k + 1)
        dense = np.column_stack([np.interp(si, s, pts[:, 0]), np.interp(si, s, pts[:, 1])])
        for _ in range(6):
            g = f.differential(dense)
            gn = np.maximum((g ** 2).sum(-1), 1e-12)
            dense = dense - ((f(dense) - level) / gn)[:, None] * g
        polys.append(dense)
    return polys


class SetDistanceField(FunctionField):
    """a + d(S, x) (or b - d(x, S)) from a dense sample of the boundary of S."""

    def __init__(self, m: Metric, window: Window, polys, base: float, sign: float, extra_tol: float,
                 inside):
        self.polys = polys
        pts = np.concatenate(polys)
        seg_a = np.concatenate([q[:-1] for q in polys])
        seg_b = np.concatenate([q[1:] for q in polys])
        # the local chart is unwrapped, so flat metrics use exact segment projection
        euclid = isinstance(m, Euclidean)
        tree = cKDTree(0.5 * (seg_a + seg_b), compact_nodes=False, balanced_tree=False)

        def dist(x):
            flat = np.asarray(x, float).reshape(-1, 2)
            if euclid:
                _, nn = tree.query(flat, k=8)
                a, b = seg_a[nn], seg_b[nn]
                ab = b - a
                t = np.clip(((flat[:, None, :] - a) * ab).sum(-1) / np.maximum((ab ** 2).sum(-1), 1e-300), 0, 1)
                out = np.hypot(*np.moveaxis(a + t[..., None] * ab - flat[:, None, :], -1, 0)).min(axis=1)
            else:
                out = np.empty(len(flat))
                for s in range(0, len(flat), 64):
                    q = flat[s:s + 64]
                    if sign > 0:
                        out[s:s + 64] = m.dist(pts[None, :, :], q[:, None, :]).min(axis=1)
                    else:
                        out[s:s + 64] = m.dist(q[:, None, :], pts[None, :, :]).min(axis=1)
            return out.reshape(np.shape(x)[:-1])

        def func(x):
            d = dist(x)
            d = np.where(inside(x), 0.0, d)
            return base + sign * d

        rng = (base, np.inf) if sign > 0 else (-np.inf, base)
        super().__init__(m, window, func, range_estimate=rng, name="set-distance")
        self.extra_tol = extra_tol
        self.freeze()

    def cert_tol(self, length: float) -> float:
        return super().cert_tol(length) + 2 * self.extra_tol


@dataclass
class EquivalenceReport:
    point: list
    label: str
    delta_p: float
    level: float
    hausdorff: float
    tol: float
    counts: tuple
    status: str

    @property
    def passed(self) -> bool:
        return self.status in ("pass", "no-op")


def _hausdorff(A, B):
    if len(A) == 0 and len(B) == 0:
        return 0.0
    if len(A) == 0 or len(B) == 0:
        return float("inf")
    ta, tb = cKDTree(A), cKDTree(B)
    return float(max(tb.query(A)[0].max(), ta.query(B)[0].max()))


def check_local_cutlocus_equivalence(f: ScalarField, m: Metric, p, delta_p: float, local_n: int = 49,
                                     angular_res: int = 720) -> EquivalenceReport:
    """Compare the singular locus of f near p with the cut locus of its sublevel (or superlevel) set."""
    p = np.asarray(p, dtype=float)
    if not m.straight:
        raise InvalidInput("local equivalence check needs a straight-line metric")
    probe = classify_point(f, m, p, angular_res=angular_res)
    label = probe.label
    if label not in ("upper-singular", "lower-singular"):
        return EquivalenceReport(p.tolist(), label, delta_p, float("nan"), 0.0, 0.0, probe.multiplicity, "no-op")
    fp = float(f(p))
    upper = label == "upper-singular"
    level = fp - delta_p / 2 if upper else fp + delta_p / 2
    half = 1.25 * delta_p
    polys = _level_curves(f, p, half, level)
    if not polys:
        raise InvalidInput("no level curve found near the point")
    sag = 1e-4 ** 2 / (8 * 0.05)
    if upper:
        g = SetDistanceField(m, f.window, polys, level, 1.0, sag, lambda x: f(x) <= level)
    else:
        # level - d(x, S): the distance to S is measured in m, i.e. d(S, x) for the reversed metric
        g = SetDistanceField(m, f.window, polys, level, -1.0, sag, lambda x: f(x) >= level)
    r = delta_p / 4
    local = Window(p[0] - half, p[0] + half, p[1] - half, p[1] + half)
    gf = extract_singular_locus(f, m, window=local, grid_n=local_n, angular_res=angular_res)
    gg = extract_singular_locus(g, m, window=local, grid_n=local_n, angular_res=angular_res)
    spacing = gf.spacing
    tol = 2 * spacing
    A, B = gf.locus_points(label), gg.locus_points(label)
    A = np.concatenate([A, p[None]])
    # directed gaps inside the ball, against the other set in a slightly larger ball
    def within(X, rad):
        return X[np.hypot(*(X - p).T) <= rad] if len(X) else X
    H = max(_directed(within(A, r), within(B, r + tol)), _directed(within(B, r), within(A, r + tol)))
    return EquivalenceReport(p.tolist(), label, delta_p, level, H, tol, probe.multiplicity,
                             "pass" if H <= tol else "fail")


def _directed(A, B):
    if len(A) == 0:
        return 0.0
    if len(B) == 0:
        return float("inf")
    return float(cKDTree(B).query(A)[0].max())


# -- f = d_N + c -------------------------------------------------------------------------

@dataclass
class ReconstructionReport:
    c: float
    max_error: float
    tol: float
    samples: int
    status: str

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def check_dist_reconstruction(f: ScalarField, m: Metric, c_est: float | None = None, grid_n: int = 257,
                              region=None) -> ReconstructionReport:
    """Rebuild f from its minimum level set N = f^{-1}(c) as d_N + c and report the gap."""
    c = f.range_estimate[0] if c_est is None else float(c_est)
    if not np.isfinite(c):
        return ReconstructionReport(float(c), float("nan"), 0.0, 0, "not-applicable")
    w = f.window
    P = w.grid(grid_n)
    spacing = w.spacing(grid_n)
    V = f(P)
    tol = 2 * spacing
    mask = V <= c + 1e-9
    if not mask.any() or float(V.min()) < c - tol:
        return ReconstructionReport(c, float("nan"), tol, 0, "not-applicable")
    # boundary nodes of the level set carry the distance
    edge = mask & ~(np.roll(mask, 1, 0) & np.roll(mask, -1, 0) & np.roll(mask, 1, 1) & np.roll(mask, -1, 1))
    B = P[edge]
    Q = P[~mask]
    if region is not None:
        Q = Q[region(Q)]
    if len(Q) == 0:
        return ReconstructionReport(c, 0.0, tol, 0, "pass")
    if isinstance(m, Euclidean) and m.periods is None:
        d = cKDTree(B).query(Q)[0]
    else:
        d = np.empty(len(Q))
        for s in range(0, len(Q), 128):
            d[s:s + 128] = m.dist(B[None, :, :], Q[s:s + 128, None, :]).min(axis=1)
    err = float(np.abs(f(Q) - (d + c)).max())
    return ReconstructionReport(c, err, tol, len(Q), "pass" if err <= tol else "fail")


# -- first-variation limit inequalities ---------------------------------------------------

@dataclass
class LimitReport:
    case: str
    margin: float
    quotient: float
    predicted: float
    quotient_gap: float
    compared: int
    passed: bool


def approach_sequence(f: ScalarField, m: Metric, p, direction, case: str = "incoming", count: int = 8,
                      scale: float = 0.05, length: float | None = None, angular_res: int = 720):
    """Certified f-geodesics through points q_i = p + eps_i * direction, eps_i -> 0."""
    p = np.asarray(p, dtype=float)
    u = np.asarray(direction, dtype=float)
    u = u / float(m.norm(p, u))
    seq = []
    for i in range(count):
        eps = scale * 2.0 ** (-i)
        q = p + eps * u
        ell = eps / 2 if length is None else length
        # the difference step must stay well inside the distance to p
        v = gradient_direction(f, m, q, min(f.grad_step, eps / 16))
        # a stub that runs into the locus is shortened until it certifies
        for _ in range(12):
            start = q - ell * v if case == "incoming" else q
            cert = certify_f_geodesic(f, straight_segment(m, start, v, ell))
            if cert.certified:
                break
            ell /= 2
        seq.append(cert)
    return seq


def check_limit_inequalities(f: ScalarField, m: Metric, p, sequence: list, case: str = "incoming",
                             angular_res: int = 720, margin_tol: float = 1e-3,
                             quotient_tol: float = 1e-2) -> LimitReport:
    """Finite-sample surrogate of the first-variation limit inequalities.

    For segments through q_i -> p with velocities w_i at q_i, the limit
    direction v of p -> q_i and w = lim w_i satisfy g_w(w, v) >= g_c(c', v)
    for every f-geodesic c leaving p (outgoing case) and <= for every
    f-geodesic arriving at p (incoming case). The difference quotient of f
    from p to q_i tends to g_w(w, v).
    """
    if case not in ("incoming", "outgoing"):
        raise InvalidInput("case must be 'incoming' or 'outgoing'")
    if not sequence or not all(c.certified for c in sequence):
        raise InvalidInput("sequence must consist of certified f-geodesics")
    p = np.asarray(p, dtype=float)
    last = sequence[-1].segment
    q = last.points[-1] if case == "incoming" else last.points[0]
    w = last.velocities[-1] if case == "incoming" else last.velocities[0]
    d = float(m.dist(p, q))
    if d <= 0:
        raise InvalidInput("sequence has reached p; cannot form a direction")
    v = (q - p) / d if m.straight else (q - p) / float(m.norm(p, q - p))
    lhs = float(covector(m, q, w) @ v)
    fan = direction_fan(f, m, p, angular_res=angular_res)
    dirs = fan.outgoing if case == "outgoing" else fan.incoming
    margins = []
    for c in dirs:
        rhs = float(covector(m, p, np.asarray(c)) @ v)
        margins.append(lhs - rhs if case == "outgoing" else rhs - lhs)
    margin = min(margins) if margins else 0.0
    quot = (float(f(q)) - float(f(p))) / d
    gap = abs(quot - lhs)
    return LimitReport(case, float(margin), quot, lhs, gap, len(dirs),
                       bool(margin >= -margin_tol and gap <= quotient_tol))
