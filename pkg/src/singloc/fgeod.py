"""f-geodesics: certification, direction fans, tracing and maximal extension.

A unit-speed curve is an f-geodesic when f grows along it at exactly unit
rate. The certificate residual is the spread max - min of f(gamma(t)) - t
over dense samples, which equals the worst pairwise defect.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from .errors import InvalidInput, NotDifferentiable
from .field import ScalarField
from .geodesic import GeodesicSegment, _rk4_batch, integrate_geodesic
from .metric import Metric

DEFAULT_ANGRES = 720
RECERT_EVERY = 50
DENSE = 257


@dataclass
class FGeodesicCertificate:
    segment: GeodesicSegment
    field_id: str
    residual: float
    tol: float
    canonical: bool = False
    # |length - d(start, end)|; certified f-geodesics are minimal
    minimal_gap: float = 0.0

    @property
    def certified(self) -> bool:
        return self.residual <= self.tol

    def to_record(self) -> dict:
        return {"segment": self.segment.to_record(), "field": self.field_id, "residual": self.residual,
                "tol": self.tol, "certified": self.certified, "canonical": self.canonical,
                "minimal_gap": self.minimal_gap}


@dataclass
class End:
    point: np.ndarray
    reason: str

    def to_record(self):
        return {"point": np.asarray(self.point).tolist(), "reason": self.reason}


@dataclass
class MaximalFGeodesic:
    certificate: FGeodesicCertificate
    backward_end: End
    forward_end: End
    velocity_jump: float = 0.0

    def to_record(self) -> dict:
        return {"certificate": self.certificate.to_record(), "backward_end": self.backward_end.to_record(),
                "forward_end": self.forward_end.to_record(), "velocity_jump": self.velocity_jump}


@dataclass
class DirectionFan:
    point: np.ndarray
    incoming: list
    outgoing: list
    delta: float
    angular_res: int
    # each cluster: (first angle, last angle, member count)
    incoming_arcs: list = dc_field(default_factory=list)
    outgoing_arcs: list = dc_field(default_factory=list)
    incoming_all: np.ndarray | None = None
    outgoing_all: np.ndarray | None = None

    @property
    def counts(self) -> tuple[int, int]:
        return len(self.incoming), len(self.outgoing)

    @property
    def empty(self) -> bool:
        return not self.incoming and not self.outgoing

    def to_record(self) -> dict:
        return {"point": np.asarray(self.point).tolist(), "delta": self.delta,
                "angular_res": self.angular_res,
                "incoming": [np.asarray(v).tolist() for v in self.incoming],
                "outgoing": [np.asarray(v).tolist() for v in self.outgoing],
                "incoming_arcs": self.incoming_arcs, "outgoing_arcs": self.outgoing_arcs}


def _field_id(f: ScalarField) -> str:
    return f.kind


def _dense(seg: GeodesicSegment, n: int = DENSE):
    if len(seg.t) >= n:
        return seg.t, seg.points
    t = np.linspace(seg.t[0], seg.t[-1], n)
    return t, seg.point_at(t)


def certify_f_geodesic(f: ScalarField, seg: GeodesicSegment, tol: float | None = None) -> FGeodesicCertificate:
    t, pts = _dense(seg)
    h = f(pts) - t
    res = float(h.max() - h.min())
    tol = f.cert_tol(seg.length) if tol is None else float(tol)
    gap = 0.0
    if f.metric.analytic:
        gap = abs(seg.length - float(f.metric.dist(seg.points[0], seg.points[-1])))
    return FGeodesicCertificate(seg, _field_id(f), res, tol, False, gap)


def canonical_reparametrize(f: ScalarField, cert: FGeodesicCertificate) -> FGeodesicCertificate:
    if not cert.certified:
        raise InvalidInput("only certified segments have a canonical parameter")
    seg = cert.segment
    shift = float(f(seg.points[0])) - float(seg.t[0])
    if cert.canonical and abs(shift) <= cert.tol:
        return cert
    return replace(cert, segment=seg.shifted(shift), canonical=True)


# -- direction fans ------------------------------------------------------------

def _unit_dirs(m: Metric, p: np.ndarray, ang: np.ndarray) -> np.ndarray:
    u = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    shape = np.broadcast_shapes(np.shape(p), u.shape)
    u = np.broadcast_to(u, shape)
    return u / m.norm(np.broadcast_to(p, shape), u)[..., None]


def _probe_points(m: Metric, p: np.ndarray, v: np.ndarray, delta: float, sense: str) -> np.ndarray:
    """Far ends of the probe geodesics of length delta with velocity v at p."""
    if m.straight:
        return p + delta * v if sense == "out" else p - delta * v
    mm = m if sense == "out" else m.reverse()
    vv = v if sense == "out" else -v
    shape = vv.shape
    base = np.broadcast_to(p, shape).reshape(-1, 2).copy()
    n = max(int(np.ceil(delta / 1e-3)), 4)
    xs, _ = _rk4_batch(mm, base, vv.reshape(-1, 2), delta / n, n)
    return xs[-1].reshape(shape)


def _residual(f, m, p, fp, ang, delta, sense):
    """delta - (gain of f along the probe); zero exactly on f-geodesic stubs."""
    v = _unit_dirs(m, p, ang)
    q = _probe_points(m, p, v, delta, sense)
    fq = f(q)
    gain = fq - fp if sense == "out" else fp - fq
    return delta - gain


def _refine(f, m, P, fP, ang0, h, delta, sense, iters: int = 40):
    """Golden-section minimization of the residual on [ang0 - h, ang0 + h], vectorized."""
    gr = (np.sqrt(5) - 1) / 2
    a, b = ang0 - h, ang0 + h
    c = b - gr * (b - a)
    d = a + gr * (b - a)
    fc = _residual(f, m, P, fP, c, delta, sense)
    fd = _residual(f, m, P, fP, d, delta, sense)
    for _ in range(iters):
        left = fc < fd
        a = np.where(left, a, c)
        b = np.where(left, d, b)
        x = np.where(left, b - gr * (b - a), a + gr * (b - a))
        fx = _residual(f, m, P, fP, x, delta, sense)
        c, d, fc, fd = (np.where(left, x, d), np.where(left, c, x),
                        np.where(left, fx, fd), np.where(left, fc, fx))
    best = np.where(fc < fd, c, d)
    return best, np.minimum(fc, fd)


def _clusters(ok: np.ndarray, res_row: np.ndarray, ang: np.ndarray):
    """Contiguous runs of certified directions on the circle."""
    n = len(ok)
    if not ok.any():
        return []
    if ok.all():
        k = int(np.argmin(res_row))
        return [(k, list(range(n)))]
    start = int(np.flatnonzero(~ok)[0])
    runs, cur = [], []
    for j in range(1, n + 1):
        i = (start + j) % n
        if ok[i]:
            cur.append(i)
        elif cur:
            runs.append(cur)
            cur = []
    if cur:
        runs.append(cur)
    return [(min(r, key=lambda i: res_row[i]), r) for r in runs]


def fan_batch(f: ScalarField, m: Metric, P, delta: float, angular_res: int = DEFAULT_ANGRES,
              tol: float | None = None, keep_all: bool = False) -> list[DirectionFan]:
    """Direction fans at a batch of points (one coarse scan plus local refinement)."""
    P = np.asarray(P, dtype=float).reshape(-1, 2)
    if not delta > 0:
        raise InvalidInput("probe length must be positive")
    if angular_res < 8:
        raise InvalidInput("angular resolution must be >= 8")
    tol = f.cert_tol(delta) if tol is None else tol
    step = 2 * np.pi / angular_res
    ang = step * np.arange(angular_res)
    fP = f(P)
    out = {}
    for sense in ("in", "out"):
        R = np.empty((len(P), angular_res))
        for s in range(0, len(P), 256):
            Pb = P[s:s + 256, None, :]
            R[s:s + 256] = _residual(f, m, Pb, fP[s:s + 256, None], ang[None, :], delta, sense)
        # refine local minima that are plausibly f-geodesic directions
        left, right = np.roll(R, 1, axis=1), np.roll(R, -1, axis=1)
        cand = (R <= left) & (R <= right) & (R <= tol + delta * step ** 2)
        ii, jj = np.nonzero(cand)
        A = np.broadcast_to(ang, R.shape).copy()
        if len(ii):
            a_best, r_best = _refine(f, m, P[ii], fP[ii], ang[jj], step, delta, sense)
            better = r_best < R[ii, jj]
            R[ii[better], jj[better]] = r_best[better]
            A[ii[better], jj[better]] = a_best[better]
        out[sense] = (R, A)
    fans = []
    for k, p in enumerate(P):
        lists, arcs, alls = {}, {}, {}
        for sense in ("in", "out"):
            R, A = out[sense]
            ok = R[k] <= tol
            cl = _clusters(ok, R[k], A[k])
            lists[sense] = [_unit_dirs(m, p, A[k, rep]) for rep, _ in cl]
            arcs[sense] = [(float(A[k, r[0]]), float(A[k, r[-1]]), len(r)) for _, r in cl]
            alls[sense] = _unit_dirs(m, p, A[k, ok]) if keep_all else None
        fans.append(DirectionFan(p.copy(), lists["in"], lists["out"], float(delta), angular_res,
                                 arcs["in"], arcs["out"], alls["in"], alls["out"]))
    return fans


def default_delta(f: ScalarField) -> float:
    return 0.01 * f.window.diagonal


def direction_fan(f: ScalarField, m: Metric, p, delta: float | None = None,
                  angular_res: int = DEFAULT_ANGRES) -> DirectionFan:
    p = np.asarray(p, dtype=float)
    if delta is None:
        delta = default_delta(f)
        lo, hi = f.range_estimate
        v = float(f(p))
        # halve near the range bounds so that probes stay inside the range
        while delta > 1e-6 and (v - delta < lo or v + delta > hi) and lo < v < hi:
            delta /= 2
    return fan_batch(f, m, p, delta, angular_res, keep_all=True)[0]


# -- tracing -------------------------------------------------------------------

def _geodesic_points(m: Metric, x, v, t, sense):
    """Points and velocities along the geodesic through x with velocity v, at offsets t >= 0."""
    t = np.asarray(t, dtype=float)
    if m.straight:
        sgn = 1.0 if sense == "forward" else -1.0
        pts = x + sgn * t[:, None] * v
        return pts, np.broadcast_to(v, pts.shape).copy()
    mm = m if sense == "forward" else m.reverse()
    vv = v if sense == "forward" else -v
    seg = integrate_geodesic(mm, x, vv, float(t[-1]), step=float(t[1] - t[0]))
    pts = seg.point_at(t)
    vel = seg.velocity_at(t)
    return pts, (vel if sense == "forward" else -vel)


def _extend(f: ScalarField, m: Metric, x, v, sense: str, step: float, max_len: float):
    """Follow the geodesic from x with velocity v while it stays an f-geodesic.

    Returns (offsets, points, velocities, reason). Offsets are arclength from x.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    n = max(int(np.ceil(max_len / step)), 1)
    t = np.linspace(0.0, max_len, n + 1)
    pts, vel = _geodesic_points(m, x, v, t, sense)
    sgn = 1.0 if sense == "forward" else -1.0
    f0 = float(f(x))
    lo, hi = f.range_estimate
    win = f.window
    inside = np.ones(len(t), dtype=bool) if m.periods is not None else win.contains(pts)
    h = f(pts) - f0 - sgn * t
    reason = "length-limit"
    last = n
    k = 0
    while k < n:
        k1 = min(k + RECERT_EVERY, n)
        if not inside[k1]:
            j = k + int(np.argmin(inside[k:k1 + 1])) - 1
            if np.ptp(h[:j + 1]) <= f.cert_tol(t[j]):
                last, reason = max(j, 0), "window-exit"
                break
            k1 = j
        if np.ptp(h[:k1 + 1]) > f.cert_tol(t[k1]):
            # bisect back to the last certified parameter
            a, b = t[k], t[k1]
            hk = h[:k + 1]
            hmin, hmax = hk.min(), hk.max()
            for _ in range(48):
                c = 0.5 * (a + b)
                tc = np.linspace(t[k], c, 9)
                pc, _ = _geodesic_points(m, x, v, np.concatenate([[0.0], tc]), sense)
                hc = f(pc[1:]) - f0 - sgn * tc
                if max(hmax, hc.max()) - min(hmin, hc.min()) <= f.cert_tol(c):
                    a = c
                else:
                    b = c
            t_end = a
            tt = np.concatenate([t[:k + 1], [t_end]]) if t_end > t[k] else t[:k + 1]
            pp, vv = _geodesic_points(m, x, v, tt, sense) if len(tt) > 1 else (pts[:1], vel[:1])
            reason = "upper-singular" if sense == "forward" else "lower-singular"
            return tt, pp, vv, reason
        fv = f0 + sgn * t[k1]
        if sense == "forward" and fv > hi:
            last, reason = k1, "range-sup"
            break
        if sense == "backward" and fv < lo:
            last, reason = k1, "range-inf"
            break
        k = k1
        last = k
    return t[:last + 1], pts[:last + 1], vel[:last + 1], reason


def _assemble(m, back, fwd, x):
    """Concatenate a backward run (from x) and a forward run (from x)."""
    tb, pb, vb, _ = back
    tf, pf, vf, _ = fwd
    t = np.concatenate([-tb[::-1], tf[1:]])
    p = np.concatenate([pb[::-1], pf[1:]])
    v = np.concatenate([vb[::-1], vf[1:]])
    return t, p, v


def gradient_direction(f: ScalarField, m: Metric, p, h: float | None = None) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    w = f.differential(p, h)
    return np.asarray(m.legendre(p, w), dtype=float)


def trace_f_geodesic(f: ScalarField, m: Metric, p, sense: str = "forward", step: float = 1e-3,
                     max_len: float | None = None, delta: float | None = None) -> FGeodesicCertificate:
    if sense not in ("forward", "backward"):
        raise InvalidInput("sense must be 'forward' or 'backward'")
    if not step > 0:
        raise InvalidInput("step must be positive")
    p = np.asarray(p, dtype=float)
    v0 = float(f(p))
    lo, hi = f.range_estimate
    if not lo < v0 < hi:
        raise InvalidInput("start point is not in the range interior")
    fan = direction_fan(f, m, p, delta)
    dirs = fan.outgoing if sense == "forward" else fan.incoming
    if len(dirs) != 1 or (fan.outgoing_arcs if sense == "forward" else fan.incoming_arcs)[0][2] > 3:
        raise NotDifferentiable(f"fan at {p.tolist()} has counts {fan.counts}")
    v = gradient_direction(f, m, p)
    max_len = 2.0 * f.window.diagonal if max_len is None else max_len
    tt, pp, vv, reason = _extend(f, m, p, v, sense, step, max_len)
    if len(tt) < 2:
        raise NotDifferentiable(f"no f-geodesic stub {sense} from {p.tolist()}")
    if sense == "backward":
        tt, pp, vv = -tt[::-1], pp[::-1], vv[::-1]
    seg = GeodesicSegment(m, tt + v0, pp, vv)
    cert = certify_f_geodesic(f, seg)
    cert.canonical = True
    cert.end_reason = reason
    return cert


def maximal_extension(f: ScalarField, m: Metric, cert: FGeodesicCertificate, step: float = 1e-3,
                      max_len: float | None = None) -> MaximalFGeodesic:
    if not cert.certified:
        raise InvalidInput("maximal_extension needs a certified segment")
    seg = cert.segment
    max_len = 2.0 * f.window.diagonal if max_len is None else max_len
    fwd = _extend(f, m, seg.points[-1], seg.velocities[-1], "forward", step, max_len)
    back = _extend(f, m, seg.points[0], seg.velocities[0], "backward", step, max_len)
    # junction smoothness: compare the segment's end velocities with the gradient law there
    jumps = []
    for run, x, v in ((fwd, seg.points[-1], seg.velocities[-1]), (back, seg.points[0], seg.velocities[0])):
        if len(run[0]) > 1:
            try:
                jumps.append(float(np.hypot(*(gradient_direction(f, m, run[1][1]) - run[2][1]))))
            except Exception:
                pass
    t = np.concatenate([-back[0][::-1] + seg.t[0], seg.t[1:-1], fwd[0] + seg.t[-1]])
    p = np.concatenate([back[1][::-1], seg.points[1:-1], fwd[1]])
    v = np.concatenate([back[2][::-1], seg.velocities[1:-1], fwd[2]])
    keep = np.concatenate([[True], np.diff(t) > 1e-12])
    whole = GeodesicSegment(m, t[keep], p[keep], v[keep])
    c = canonical_reparametrize(f, certify_f_geodesic(f, whole)) if certify_f_geodesic(f, whole).certified \
        else certify_f_geodesic(f, whole)
    return MaximalFGeodesic(c, End(back[1][-1], back[3]), End(fwd[1][-1], fwd[3]),
                            max(jumps) if jumps else 0.0)


# -- segment characterization ----------------------------------------------------

@dataclass
class CharacterizationReport:
    a1: float
    sublevel_distance: float
    segment_length: float
    segment_gap: float
    crossing_points: int
    crossing_ok: int
    tol: float
    passed: bool


def _march_to_sublevel(f, m, q, a1, ang, max_len, iters=400):
    """Sphere tracing backwards along straight rays until f <= a1; returns hit lengths."""
    w = _unit_dirs(m, q, ang)
    s = np.zeros(len(ang))
    done = np.zeros(len(ang), dtype=bool)
    for _ in range(iters):
        x = q - s[:, None] * w
        gap = f(x) - a1
        done |= gap <= 1e-12
        if done.all():
            break
        s = np.where(done, s, s + np.maximum(gap, 0.0))
        done |= s > max_len
    s[~done] = np.inf
    s[s > max_len] = np.inf
    return s


def sublevel_distance(f: ScalarField, m: Metric, q, a1: float, angular_res: int = DEFAULT_ANGRES) -> float:
    """d(f^{-1}(-inf, a1], q) for straight-line metrics by ray marching plus golden refinement."""
    q = np.asarray(q, dtype=float)
    if not m.straight:
        raise InvalidInput("sublevel ray marching needs a straight-line metric")
    if float(f(q)) <= a1:
        return 0.0
    max_len = 4.0 * f.window.diagonal
    ang = 2 * np.pi * np.arange(angular_res) / angular_res
    s = _march_to_sublevel(f, m, q, a1, ang, max_len)
    j = int(np.argmin(s))
    if not np.isfinite(s[j]):
        return np.inf
    a, b = ang[j] - 2 * np.pi / angular_res, ang[j] + 2 * np.pi / angular_res
    gr = (np.sqrt(5) - 1) / 2
    for _ in range(40):
        c, d = b - gr * (b - a), a + gr * (b - a)
        sc, sd = _march_to_sublevel(f, m, q, a1, np.array([c, d]), max_len)
        if sc < sd:
            b = d
        else:
            a = c
    best = _march_to_sublevel(f, m, q, a1, np.array([0.5 * (a + b)]), max_len)[0]
    return float(min(best, s[j]))


def check_segment_characterization(f: ScalarField, m: Metric, cert: FGeodesicCertificate,
                                   a1: float | None = None, crossing: int = 3) -> CharacterizationReport:
    if not cert.certified:
        raise InvalidInput("segment is not certified")
    seg = cert.segment
    a1 = float(f(seg.points[0])) if a1 is None else float(a1)
    end = seg.points[-1]
    L = float(f(end)) - a1
    tol = max(f.cert_tol(L), cert.tol)
    d = sublevel_distance(f, m, end, a1)
    # neighbours of the far end must also be reached by f-geodesics crossing the sublevel set
    v = seg.velocities[-1]
    nrm = np.array([-v[1], v[0]]) / np.hypot(*v)
    ok = 0
    for k in range(crossing):
        s = 0.05 * L * (k + 1) / crossing
        x = end - 0.1 * L * v / np.hypot(*v) + s * nrm
        if float(f(x)) > a1 and abs(sublevel_distance(f, m, x, a1) - (float(f(x)) - a1)) <= tol:
            ok += 1
    gap = abs(d - L)
    return CharacterizationReport(a1, d, seg.length, gap, crossing, ok, tol,
                                  bool(gap <= tol and ok == crossing))
