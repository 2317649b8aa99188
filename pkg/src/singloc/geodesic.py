"""Geodesic integration, point-to-point distances and minimizer enumeration."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput, NumericFailure
from .metric import Metric
from .window import Window

DEFAULT_STEP = 1e-3


@dataclass
class GeodesicSegment:
    """Unit-speed geodesic sampled at increasing parameters ``t``.

    ``points`` are chart coordinates. On a torus the trajectory is kept
    unwrapped so that the polyline stays continuous; ``end`` is reduced.
    """

    metric: Metric
    t: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    truncated: bool = False

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.points = np.asarray(self.points, dtype=float)
        self.velocities = np.asarray(self.velocities, dtype=float)
        if len(self.t) < 2 or np.any(np.diff(self.t) <= 0):
            raise InvalidInput("segment parameters must be strictly increasing")

    @property
    def metric_id(self) -> dict:
        return self.metric.to_dict()

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def start_dir(self) -> np.ndarray:
        return self.velocities[0]

    @property
    def end(self) -> np.ndarray:
        return self.metric.wrap(self.points[-1])

    @property
    def interval(self) -> tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])

    @property
    def length(self) -> float:
        return float(self.t[-1] - self.t[0])

    def point_at(self, s):
        s = np.asarray(s, dtype=float)
        x = np.interp(s, self.t, self.points[:, 0])
        y = np.interp(s, self.t, self.points[:, 1])
        return np.stack([x, y], axis=-1)

    def velocity_at(self, s):
        s = np.asarray(s, dtype=float)
        vx = np.interp(s, self.t, self.velocities[:, 0])
        vy = np.interp(s, self.t, self.velocities[:, 1])
        return np.stack([vx, vy], axis=-1)

    def shifted(self, dt: float) -> "GeodesicSegment":
        return GeodesicSegment(self.metric, self.t + dt, self.points.copy(),
                               self.velocities.copy(), self.truncated)

    def speed_residual(self) -> float:
        return float(np.max(np.abs(self.metric.norm(self.points, self.velocities) - 1.0)))

    def rows(self):
        for t, p, v in zip(self.t, self.points, self.velocities):
            yield [float(t), float(p[0]), float(p[1]), float(v[0]), float(v[1])]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "y", "vx", "vy"])
            for r in self.rows():
                w.writerow([repr(x) for x in r])

    def to_record(self) -> dict:
        return {"t": self.t.tolist(), "points": self.points.tolist(),
                "velocities": self.velocities.tolist(), "truncated": self.truncated}


def straight_segment(m: Metric, start, velocity, length: float, samples: int = 33,
                     t0: float = 0.0) -> GeodesicSegment:
    """Segment of a straight-line metric with constant F-unit velocity."""
    start = np.asarray(start, dtype=float)
    velocity = np.asarray(velocity, dtype=float)
    s = np.linspace(0.0, length, max(samples, 2))
    pts = start + s[:, None] * velocity
    vel = np.broadcast_to(velocity, pts.shape).copy()
    return GeodesicSegment(m, s + t0, pts, vel)


@dataclass
class VariationProbe:
    segment: GeodesicSegment
    field: np.ndarray  # U sampled along segment.t, shape (n, 2)

    def __post_init__(self):
        self.field = np.asarray(self.field, dtype=float)
        if self.field.shape != self.segment.points.shape:
            raise InvalidInput("variation field must match the segment samples")


@dataclass
class DistanceResult:
    value: float
    minimizers: list = field(default_factory=list)
    method: str = "analytic"
    approximate: bool = False
    # for shooting fallbacks: residual of the best path found
    gap: float = 0.0


def _check_unit(m: Metric, x, v, tol: float = 1e-9):
    if abs(float(m.norm(x, v)) - 1.0) > tol:
        raise InvalidInput(f"direction {np.asarray(v).tolist()} is not F-unit")


def _rk4_batch(m: Metric, x: np.ndarray, v: np.ndarray, h: float, n: int):
    """Integrate x'' = spray(x, x') for a batch; returns arrays (n+1, B, 2)."""
    xs = np.empty((n + 1,) + x.shape)
    vs = np.empty((n + 1,) + v.shape)
    xs[0], vs[0] = x, v
    for k in range(n):
        a1 = m.spray(x, v)
        x2, v2 = x + 0.5 * h * v, v + 0.5 * h * a1
        a2 = m.spray(x2, v2)
        x3, v3 = x + 0.5 * h * v2, v + 0.5 * h * a2
        a3 = m.spray(x3, v3)
        x4, v4 = x + h * v3, v + h * a3
        a4 = m.spray(x4, v4)
        x = x + h / 6.0 * (v + 2 * v2 + 2 * v3 + v4)
        v = v + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        xs[k + 1], vs[k + 1] = x, v
    return xs, vs


def integrate_geodesic(m: Metric, start, direction, length: float, step: float = DEFAULT_STEP,
                       window: Window | None = None) -> GeodesicSegment:
    start = np.asarray(start, dtype=float)
    direction = np.asarray(direction, dtype=float)
    if not (np.all(np.isfinite(start)) and np.all(np.isfinite(direction))):
        raise InvalidInput("non-finite start or direction")
    if not step > 0:
        raise InvalidInput("step must be positive")
    if not length > 0:
        raise InvalidInput("length must be positive")
    _check_unit(m, start, direction)
    n = int(np.ceil(length / step - 1e-12))
    h = length / n
    t = np.linspace(0.0, length, n + 1)
    if m.straight:
        pts = start + t[:, None] * direction
        vel = np.broadcast_to(direction, pts.shape).copy()
    else:
        xs, vs = _rk4_batch(m, start[None, :], direction[None, :], h, n)
        pts, vel = xs[:, 0, :], vs[:, 0, :]
    truncated = False
    if window is not None and m.periods is None:
        inside = window.contains(pts)
        if not inside.all():
            last = int(np.argmin(inside))
            last = max(last, 2)
            t, pts, vel = t[:last], pts[:last], vel[:last]
            truncated = True
    return GeodesicSegment(m, t, pts, vel, truncated)


def first_variation(m: Metric, probe: VariationProbe) -> float:
    seg = probe.segment
    va, vb = seg.velocities[0], seg.velocities[-1]
    ua, ub = probe.field[0], probe.field[-1]
    ga = m.tensor(seg.points[0], va)
    gb = m.tensor(seg.points[-1], vb)
    return float(vb @ gb @ ub - va @ ga @ ua)


def _segments_from_offsets(m: Metric, p, offsets, samples: int = 33):
    segs = []
    for d in offsets:
        L = float(m.norm(p, d))
        if L == 0:
            continue
        segs.append(straight_segment(m, p, d / L, L, samples))
    return segs


def _shoot(m: Metric, p, q, n_dirs: int = 64, step: float = 1e-2, max_len: float | None = None,
           newton_iters: int = 30, accept: float = 1e-7):
    """Multi-start shooting for metrics without a closed-form distance."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    chord = float(np.hypot(*(q - p)))
    if max_len is None:
        scale = float(np.sqrt(np.linalg.eigvalsh(m.tensor(p, np.array([1.0, 0.0]))).max()))
        max_len = 3.0 * chord * max(scale, 1.0) + step
    ang = 2 * np.pi * np.arange(n_dirs) / n_dirs
    u = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    v0 = u / m.norm(np.broadcast_to(p, u.shape), u)[:, None]
    n = int(np.ceil(max_len / step))
    xs, _ = _rk4_batch(m, np.broadcast_to(p, u.shape).copy(), v0, max_len / n, n)
    miss = np.hypot(*(xs - q).transpose(2, 0, 1))  # (n+1, B)
    k = miss.argmin(axis=0)
    order = np.argsort(miss[k, np.arange(n_dirs)])

    def endpoint(a, L):
        uu = np.array([np.cos(a), np.sin(a)])
        vv = uu / float(m.norm(p, uu))
        nn = max(int(np.ceil(L / step)), 1)
        xe, _ = _rk4_batch(m, p[None, :], vv[None, :], L / nn, nn)
        return xe[-1, 0]

    found = []
    for j in order[: min(8, n_dirs)]:
        a, L = ang[j], max(k[j] * max_len / n, step)
        for _ in range(newton_iters):
            e = endpoint(a, L) - q
            if np.hypot(*e) < accept:
                break
            ha, hL = 1e-6, 1e-6
            J = np.column_stack([(endpoint(a + ha, L) - endpoint(a - ha, L)) / (2 * ha),
                                 (endpoint(a, L + hL) - endpoint(a, L - hL)) / (2 * hL)])
            try:
                da, dL = np.linalg.solve(J, -e)
            except np.linalg.LinAlgError:
                break
            a, L = a + da, max(L + dL, 1e-9)
        res = float(np.hypot(*(endpoint(a, L) - q)))
        found.append((L, a, res))
    return found


def distance(m: Metric, p, q, opts: dict | None = None) -> DistanceResult:
    opts = opts or {}
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
        raise InvalidInput("non-finite endpoints")
    length_tol = opts.get("length_tol", 1e-5)
    if m.analytic:
        value = float(m.dist(p, q))
        if value == 0.0:
            return DistanceResult(0.0, [], "analytic")
        offs = m.image_offsets(p, q, length_tol) if m.periods else m.image_offsets(p, q)
        return DistanceResult(value, _segments_from_offsets(m, p, offs), "analytic")
    if np.allclose(p, q):
        return DistanceResult(0.0, [], "shooting")
    step = opts.get("step", 1e-2)
    found = _shoot(m, p, q, n_dirs=opts.get("n_dirs", 64), step=step,
                   accept=opts.get("accept", 1e-7))
    ok = [f for f in found if f[2] < opts.get("accept", 1e-7)]
    if not ok:
        L, a, res = min(found, key=lambda f: f[2])
        if not np.isfinite(L):
            raise NumericFailure("shooting failed")
        return DistanceResult(float(L), [], "shooting", approximate=True, gap=float(res))
    best = min(f[0] for f in ok)
    segs = []
    for L, a, res in sorted(ok):
        if L > best + length_tol:
            continue
        u = np.array([np.cos(a), np.sin(a)])
        segs.append(integrate_geodesic(m, p, u / float(m.norm(p, u)), L, step=min(step, L / 4)))
    return DistanceResult(float(best), segs, "shooting")


def _angle(v) -> float:
    return float(np.arctan2(v[1], v[0]))


def minimal_segments(m: Metric, p, q, angle_tol: float = 1e-2, length_tol: float = 1e-5) -> list:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.allclose(m.wrap(p), m.wrap(q)):
        raise InvalidInput("minimal_segments needs p != q")
    res = distance(m, p, q, {"length_tol": length_tol})
    out = []
    for seg in sorted(res.minimizers, key=lambda s: s.length):
        if seg.length > res.value + length_tol:
            continue
        a = _angle(seg.start_dir)
        if all(abs(np.angle(np.exp(1j * (a - _angle(o.start_dir))))) > angle_tol for o in out):
            out.append(seg)
    return out
