"""1-Lipschitz scalar fields.

A field is built, then frozen; evaluation before ``freeze`` is refused and
the object is read-only afterwards. Fields evaluate on arrays of points of
shape (..., 2) and carry a computational window plus an estimate of their
range (inf, sup).
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from . import sets as csg
from .errors import InvalidInput, NumericFailure
from .metric import Euclidean, FlatTorus, Metric, covector, metric_from_dict
from .window import Window

DEFAULT_GRID = 512
DEFAULT_SCHEDULE = tuple(2.0 ** k for k in range(11))
GRAD_STEP_REL = 1e-5


class ScalarField:
    kind = "abstract"
    # "analytic" fields are exact to rounding; "grid" fields carry discretization error
    accuracy = "analytic"

    def __init__(self, metric: Metric, window: Window, range_estimate=(-np.inf, np.inf)):
        self.metric = metric
        self.window = window
        self.range_estimate = (float(range_estimate[0]), float(range_estimate[1]))
        self.grid_spacing = 0.0
        self.info: dict = {}
        self._frozen = False

    # -- lifecycle
    def freeze(self) -> "ScalarField":
        self._frozen = True
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen

    def __setattr__(self, name, value):
        if getattr(self, "_frozen", False) and name != "_frozen":
            raise AttributeError(f"field is frozen; cannot set {name}")
        object.__setattr__(self, name, value)

    def __call__(self, x):
        if not self._frozen:
            raise RuntimeError("field evaluated before freeze()")
        x = np.asarray(x, dtype=float)
        return self._eval(x)

    def _eval(self, x):
        raise NotImplementedError

    # -- derived quantities
    def cert_tol(self, length: float) -> float:
        if self.accuracy == "grid":
            return 2.0 * self.grid_spacing
        return 1e-6 * max(float(length), 1e-3) + 1e-12

    @property
    def grad_step(self) -> float:
        return GRAD_STEP_REL * self.window.diagonal

    def differential(self, x, h: float | None = None):
        """Central-difference covector (df/dx, df/dy)."""
        x = np.asarray(x, dtype=float)
        h = self.grad_step if h is None else h
        ex = np.array([h, 0.0])
        ey = np.array([0.0, h])
        gx = (self(x + ex) - self(x - ex)) / (2 * h)
        gy = (self(x + ey) - self(x - ey)) / (2 * h)
        return np.stack([gx, gy], axis=-1)

    def one_sided(self, x, h: float | None = None):
        """Forward and backward difference covectors."""
        x = np.asarray(x, dtype=float)
        h = self.grad_step if h is None else h
        f0 = self(x)
        fw, bw = [], []
        for e in (np.array([h, 0.0]), np.array([0.0, h])):
            fw.append((self(x + e) - f0) / h)
            bw.append((f0 - self(x - e)) / h)
        return np.stack(fw, axis=-1), np.stack(bw, axis=-1)

    def gradient(self, x, h: float | None = None):
        """Finsler gradient: the F-unit direction dual to the differential."""
        return self.metric.legendre(x, self.differential(x, h))

    def in_range_interior(self, values, margin: float = 0.0):
        lo, hi = self.range_estimate
        v = np.asarray(values)
        return (v > lo + margin) & (v < hi - margin)

    def to_dict(self) -> dict:
        raise NotImplementedError

    def base_dict(self) -> dict:
        return {"metric": self.metric.to_dict(), "window": self.window.to_list(),
                "periodic": self.window.periodic}


# -- grid marching fallback -----------------------------------------------------

_STENCIL = [(1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1),
            (1, 2), (2, 1), (-1, 2), (-2, 1), (1, -2), (2, -1), (-1, -2), (-2, -1)]


def march_from_mask(m: Metric, window: Window, n: int, seeds: np.ndarray) -> np.ndarray:
    """Graph-Dijkstra distance d(seed set, x) on an n x n grid, 16-neighbour stencil.

    Edge (i -> j) carries F(midpoint, x_j - x_i); the result approximates the
    forward distance from the seed set to every node.
    """
    P = window.grid(n)
    idx = np.arange(n * n).reshape(n, n)
    rows, cols, w = [], [], []
    for dr, dc in _STENCIL:
        r0, r1 = max(0, -dr), min(n, n - dr)
        c0, c1 = max(0, -dc), min(n, n - dc)
        a = idx[r0:r1, c0:c1].ravel()
        b = idx[r0 + dr:r1 + dr, c0 + dc:c1 + dc].ravel()
        pa = P.reshape(-1, 2)[a]
        pb = P.reshape(-1, 2)[b]
        rows.append(a)
        cols.append(b)
        w.append(m.norm(0.5 * (pa + pb), pb - pa))
    G = coo_matrix((np.concatenate(w), (np.concatenate(rows), np.concatenate(cols))),
                   shape=(n * n, n * n)).tocsr()
    src = np.flatnonzero(np.asarray(seeds).ravel())
    if src.size == 0:
        raise InvalidInput("empty seed set")
    d = dijkstra(G, directed=True, indices=src, min_only=True)
    return d.reshape(n, n)


class GridField(ScalarField):
    """Bilinear interpolation of grid values; evaluation outside the window clamps."""

    kind = "grid"
    accuracy = "grid"

    def __init__(self, metric, window, values, range_estimate=None, label="grid"):
        super().__init__(metric, window)
        xs, ys = window.axes(values.shape[0])
        self.values = values
        self._interp = RegularGridInterpolator((ys, xs), values, bounds_error=False, fill_value=None)
        self.grid_spacing = window.spacing(values.shape[0])
        self.label = label
        if range_estimate is None:
            range_estimate = (float(np.nanmin(values)), float(np.nanmax(values)))
        self.range_estimate = range_estimate

    def _eval(self, x):
        xc = np.clip(x[..., 0], self.window.x0, self.window.x1)
        yc = np.clip(x[..., 1], self.window.y0, self.window.y1)
        return self._interp(np.stack([yc, xc], axis=-1))

    def to_dict(self):
        return {"kind": "grid", "label": self.label, **self.base_dict()}


# -- distance-type fields -----------------------------------------------------

def _point_list(N: csg.ClosedSet):
    prims = N.primitives()
    if all(isinstance(p, csg.PointSet) for p in prims) and not isinstance(N, (csg.Complement, csg.Difference, csg.Intersection)):
        return np.array([p.point for p in prims])
    return None


class DistFromSet(ScalarField):
    """d_N(x) = inf over p in N of d(p, x)."""

    kind = "dist_from_set"

    def __init__(self, metric: Metric, N: csg.ClosedSet, window: Window, grid_n: int = DEFAULT_GRID,
                 sign: float = 1.0):
        super().__init__(metric, window, (0.0, np.inf))
        self.N = N
        self.sign = sign
        pts = _point_list(N)
        self._points = pts
        self._boundary = None
        self._grid = None
        if pts is not None and metric.analytic:
            self.method = "analytic-points"
        elif isinstance(metric, Euclidean) and not isinstance(metric, FlatTorus):
            self.method = "analytic-csg"
            self._boundary = csg.extract_boundary(N)
            if self._boundary.size == 0 and not np.any(N.contains(window.grid(33))):
                raise InvalidInput("closed set is empty")
        else:
            self.method = "grid-marching"
            seeds = N.contains(window.grid(grid_n), tol=0.5 * window.spacing(grid_n))
            self._grid = GridField(metric, window, march_from_mask(metric, window, grid_n, seeds))
            self._grid.freeze()
            self.accuracy = "grid"
            self.grid_spacing = window.spacing(grid_n)
        if pts is not None and len(pts) == 0:
            raise InvalidInput("closed set is empty")
        if isinstance(metric, FlatTorus):
            if pts is None:
                raise InvalidInput("torus fields support point sets only")
            if len(pts) == 1:
                self.range_estimate = (0.0, float(np.hypot(*metric.periods) / 2))
            else:
                g = self._raw(window.grid(129))
                self.range_estimate = (0.0, float(g.max()))

    def _raw(self, x):
        if self.method == "analytic-points":
            out = None
            for p in self._points:
                d = self.metric.dist(p, x)
                out = d if out is None else np.minimum(out, d)
            return out
        if self.method == "analytic-csg":
            return csg.euclidean_distance(self.N, x, self._boundary)
        return self._grid(x)

    def _eval(self, x):
        return self._raw(x)

    def to_dict(self):
        return {"kind": self.kind, "set": self.N.to_dict(), **self.base_dict()}


class NegDistToSet(ScalarField):
    """-d^N(x) = -inf over p in N of d(x, p), computed with the reversed metric."""

    kind = "neg_dist_to_set"

    def __init__(self, metric: Metric, N: csg.ClosedSet, window: Window, grid_n: int = DEFAULT_GRID):
        super().__init__(metric, window, (-np.inf, 0.0))
        self.N = N
        self._inner = DistFromSet(metric.reverse(), N, window, grid_n).freeze()
        self.accuracy = self._inner.accuracy
        self.grid_spacing = self._inner.grid_spacing
        lo, hi = self._inner.range_estimate
        self.range_estimate = (-hi, -lo)

    def _eval(self, x):
        return -self._inner(x)

    def to_dict(self):
        return {"kind": self.kind, "set": self.N.to_dict(), **self.base_dict()}


class Busemann(ScalarField):
    """B(x) = lim t - d(x, gamma(t)) along the ray gamma(t) = origin + t * dir."""

    kind = "busemann"

    def __init__(self, metric: Metric, ray_dir, ray_origin, window: Window,
                 schedule=DEFAULT_SCHEDULE, limit: str = "analytic"):
        super().__init__(metric, window)
        if not metric.analytic or metric.periods is not None:
            raise InvalidInput("busemann fields need a planar metric with closed-form distance")
        sched = np.asarray(schedule, dtype=float)
        if sched.ndim != 1 or len(sched) < 2 or np.any(np.diff(sched) <= 0):
            raise InvalidInput("schedule must be strictly increasing with at least 2 entries")
        d = np.asarray(ray_dir, dtype=float)
        o = np.asarray(ray_origin, dtype=float)
        nd = float(metric.norm(o, d))
        if not nd > 0:
            raise InvalidInput("ray direction must be nonzero")
        self.direction = d / nd
        self.origin = o
        self.schedule = sched
        if limit not in ("analytic", "schedule"):
            raise InvalidInput("limit must be 'analytic' or 'schedule'")
        # translation-invariant norms give the limit in closed form
        self.limit = limit if metric.straight else "schedule"
        self._cov = covector(metric, o, self.direction)
        probe = window.grid(33).reshape(-1, 2)
        approx = np.array([self.approximant(t, probe) for t in sched])
        drops = approx[:-1] - approx[1:]
        if drops.max() > 1e-8:
            raise NumericFailure(f"busemann approximants decrease by {drops.max():.3e}")
        self.info = {"cauchy_gap": float(np.abs(approx[-1] - approx[-2]).max()),
                     "limit": self.limit,
                     "limit_gap": float(np.abs(self._limit(probe) - approx[-1]).max())}

    def approximant(self, t, x):
        g = self.origin + t * self.direction
        return t - self.metric.dist(np.asarray(x, float), g)

    def _limit(self, x):
        return (x[..., 0] - self.origin[0]) * self._cov[0] + (x[..., 1] - self.origin[1]) * self._cov[1]

    def _eval(self, x):
        if self.limit == "analytic":
            return self._limit(x)
        return self.approximant(self.schedule[-1], x)

    def to_dict(self):
        return {"kind": self.kind, "ray_dir": self.direction.tolist(), "ray_origin": self.origin.tolist(),
                "schedule": self.schedule.tolist(), "limit": self.limit, **self.base_dict()}


def _final_quarter(n_max: int, picks: int = 8) -> np.ndarray:
    lo = int(np.ceil(0.75 * n_max))
    base = np.unique(np.linspace(lo, n_max - 1, picks).astype(int))
    # consecutive pairs so that alternating sequences are seen on both parities
    return np.unique(np.concatenate([base, base + 1]))


class Horofunction(ScalarField):
    """limsup of d(x_1, x_n) - d(x, x_n), realized as a max over the last quarter of indices."""

    kind = "horofunction"

    def __init__(self, metric: Metric, seq: Callable[[int], np.ndarray], n_max: int, window: Window,
                 name: str = "custom"):
        super().__init__(metric, window)
        if not metric.analytic:
            raise InvalidInput("horofunctions need a closed-form distance")
        if n_max < 8:
            raise InvalidInput("n_max must be >= 8")
        self.seq = seq
        self.name = name
        self.n_max = int(n_max)
        self.indices = _final_quarter(self.n_max)
        self.x1 = np.asarray(seq(1), dtype=float)
        self.tail = np.array([np.asarray(seq(int(k)), dtype=float) for k in self.indices])
        reach = float(np.min(metric.dist(self.x1, self.tail)))
        if not reach > 10 * window.diagonal:
            raise InvalidInput("sequence does not diverge within the precision horizon")
        self._c = metric.dist(self.x1, self.tail)
        # stability of the surrogate: same construction with half the horizon
        probe = window.grid(17).reshape(-1, 2)
        half = _final_quarter(max(self.n_max // 2, 8))
        tail_half = np.array([np.asarray(seq(int(k)), dtype=float) for k in half])
        c_half = metric.dist(self.x1, tail_half)
        v_half = np.max([c - metric.dist(probe, q) for c, q in zip(c_half, tail_half)], axis=0)
        v_full = self._raw(probe)
        self.info = {"indices": self.indices.tolist(), "refinement_change": float(np.abs(v_full - v_half).max())}

    def _raw(self, x):
        out = None
        for c, q in zip(self._c, self.tail):
            v = c - self.metric.dist(x, q)
            out = v if out is None else np.maximum(out, v)
        return out

    def _eval(self, x):
        return self._raw(x)

    def to_dict(self):
        return {"kind": self.kind, "sequence": self.name, "n_max": self.n_max, **self.base_dict()}


@dataclass
class BulgedSphere:
    """Generator of closed sets C_n = R^2 minus (B_n(o) union bulge balls).

    Each bulge is a pair of corner angles (lo, hi). Its ball is centred at
    ``radius`` * e((lo + hi) / 2) and passes through the two corner points
    n * e(lo), n * e(hi) of the big circle.
    """

    bulges: list = dc_field(default_factory=list)
    radius: float = 2.0

    def centers(self) -> np.ndarray:
        mids = np.array([(lo + hi) / 2 for lo, hi in self.bulges]).reshape(-1)
        return self.radius * np.stack([np.cos(mids), np.sin(mids)], axis=-1).reshape(-1, 2)

    def __call__(self, n: float) -> csg.ClosedSet:
        parts = [csg.Disk((0.0, 0.0), n)]
        for (lo, hi), u in zip(self.bulges, self.centers()):
            q = n * np.array([np.cos(lo), np.sin(lo)])
            parts.append(csg.Disk(u, float(np.hypot(*(u - q)))))
        return csg.Complement(csg.Union(parts, truncation=len(self.bulges)))

    def level_value(self, n: float, x) -> np.ndarray:
        """n - d(x, C_n) from the explicit arcs of the boundary of C_n.

        The corners are known in closed form, so no circle intersections are
        solved; differences of nearly equal radii are rewritten to avoid
        cancellation at large n.
        """
        x = np.asarray(x, dtype=float)
        r2 = x[..., 0] ** 2 + x[..., 1] ** 2
        rad = np.sqrt(r2)
        ang = np.mod(np.arctan2(x[..., 1], x[..., 0]), 2 * np.pi)
        in_wedge = np.zeros(ang.shape, dtype=bool)
        best = np.full(ang.shape, -np.inf)
        inside_bulge = np.zeros(ang.shape, dtype=bool)
        for (lo, hi), u in zip(self.bulges, self.centers()):
            a, b = np.mod(lo, 2 * np.pi), np.mod(hi, 2 * np.pi)
            in_wedge |= np.mod(ang - a, 2 * np.pi) < np.mod(b - a, 2 * np.pi)
            # corners of this bulge on the big circle
            for phi in (lo, hi):
                e = np.array([np.cos(phi), np.sin(phi)])
                dq = np.hypot(x[..., 0] - n * e[0], x[..., 1] - n * e[1])
                best = np.maximum(best, (2 * n * (x[..., 0] * e[0] + x[..., 1] * e[1]) - r2) / (n + dq))
            e = np.array([np.cos(lo), np.sin(lo)])
            r = float(np.hypot(*(u - n * e)))
            n_minus_r = (2 * n * float(u @ e) - float(u @ u)) / (n + r)
            du = np.hypot(x[..., 0] - u[0], x[..., 1] - u[1])
            inside_bulge |= du < r
            # the bulge arc faces outward, between the two corner directions seen from u
            ca = np.arctan2(n * np.sin(lo) - u[1], n * np.cos(lo) - u[0])
            cb = np.arctan2(n * np.sin(hi) - u[1], n * np.cos(hi) - u[0])
            dirx = np.arctan2(x[..., 1] - u[1], x[..., 0] - u[0])
            on_arc = np.mod(dirx - ca, 2 * np.pi) <= np.mod(cb - ca, 2 * np.pi)
            val = np.where(du <= r, n_minus_r + du, 2 * n - n_minus_r - du)
            best = np.where(on_arc, np.maximum(best, val), best)
        # big circle away from the wedges: n - (n - |x|) for interior points
        best = np.where(~in_wedge, np.maximum(best, np.where(rad <= n, rad, 2 * n - rad)), best)
        in_C = (rad >= n) & ~inside_bulge
        return np.where(in_C, n, best)
    def to_dict(self):
        return {"generator": "bulged_sphere", "bulges": [list(map(float, b)) for b in self.bulges],
                "radius": self.radius}


class WuEta(ScalarField):
    """limsup over levels t of t - d(x, C_t).

    With no generator, C_t is the metric sphere S_p(t). A ``BulgedSphere``
    generator gives the outward-bulged family used for lower-singular
    segments.
    """

    kind = "wu_eta"

    def __init__(self, metric: Metric, basepoint, levels, window: Window,
                 generator: BulgedSphere | None = None, sphere_samples: int = 4096):
        super().__init__(metric, window)
        lv = np.asarray(levels, dtype=float)
        if lv.ndim != 1 or len(lv) < 1 or np.any(np.diff(lv) <= 0):
            raise InvalidInput("levels must be strictly increasing")
        self.basepoint = np.asarray(basepoint, dtype=float)
        self.levels = lv
        self.generator = generator
        k = max(1, int(np.ceil(len(lv) / 4)))
        self.active = lv[-k:]
        if generator is not None:
            if not isinstance(metric, Euclidean) or isinstance(metric, FlatTorus):
                raise InvalidInput("bulged generators need the planar Euclidean metric")
            if not np.allclose(self.basepoint, 0.0):
                raise InvalidInput("bulged generators are centred at the origin")
        elif not isinstance(metric, Euclidean):
            if not metric.straight or not metric.analytic:
                raise InvalidInput("sphere sampling needs a straight-line metric")
            ang = 2 * np.pi * np.arange(sphere_samples) / sphere_samples
            u = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
            self._unit = u / metric.norm(self.basepoint, u)[:, None]
        probe = window.grid(17).reshape(-1, 2)
        vals = np.array([self.approximant(t, probe) for t in self.active])
        self.range_estimate = (0.0, np.inf)
        self.info = {"active_levels": self.active.tolist(),
                     "cauchy_gap": float(np.abs(vals[-1] - vals[-2]).max()) if len(vals) > 1 else 0.0}

    def approximant(self, t, x):
        x = np.asarray(x, dtype=float)
        if self.generator is not None:
            return self.generator.level_value(t, x)
        if isinstance(self.metric, Euclidean):
            d = self.metric.dist(self.basepoint, x)
            if isinstance(self.metric, FlatTorus):
                raise InvalidInput("spheres on the torus are not supported")
            return t - np.abs(t - d)
        sph = self.basepoint + t * self._unit
        flat = x.reshape(-1, 2)
        out = np.empty(len(flat))
        for s in range(0, len(flat), 256):
            q = flat[s:s + 256]
            out[s:s + 256] = self.metric.dist(q[:, None, :], sph[None]).min(axis=1)
        return t - out.reshape(x.shape[:-1])

    def _eval(self, x):
        out = None
        for t in self.active:
            v = self.approximant(t, x)
            out = v if out is None else np.maximum(out, v)
        return out

    def to_dict(self):
        d = {"kind": self.kind, "basepoint": self.basepoint.tolist(), "levels": self.levels.tolist(),
             **self.base_dict()}
        if self.generator is not None:
            d["generator"] = self.generator.to_dict()
        return d


# -- combinators ------------------------------------------------------------------

class Constant(ScalarField):
    kind = "constant"

    def __init__(self, metric: Metric, window: Window, value: float):
        super().__init__(metric, window, (value, value))
        self.value = float(value)

    def _eval(self, x):
        return np.full(np.shape(x)[:-1], self.value)

    def to_dict(self):
        return {"kind": self.kind, "value": self.value, **self.base_dict()}


def _same_stage(f1: ScalarField, f2: ScalarField):
    if f1.metric != f2.metric or f1.window != f2.window:
        raise InvalidInput("combined fields must share metric and window")


class Combined(ScalarField):
    def __init__(self, op: str, f1: ScalarField, f2: ScalarField):
        _same_stage(f1, f2)
        super().__init__(f1.metric, f1.window)
        if op not in ("max", "min"):
            raise InvalidInput(f"unknown combine op {op!r}")
        self.kind = op
        self.op = op
        self.parts = (f1, f2)
        self.accuracy = "grid" if "grid" in (f1.accuracy, f2.accuracy) else "analytic"
        self.grid_spacing = max(f1.grid_spacing, f2.grid_spacing)
        (a0, a1), (b0, b1) = f1.range_estimate, f2.range_estimate
        if op == "max":
            self.range_estimate = (max(a0, b0), max(a1, b1))
        else:
            self.range_estimate = (min(a0, b0), min(a1, b1))

    def _eval(self, x):
        a, b = self.parts[0](x), self.parts[1](x)
        return np.maximum(a, b) if self.op == "max" else np.minimum(a, b)

    def to_dict(self):
        return {"kind": self.op, "f1": self.parts[0].to_dict(), "f2": self.parts[1].to_dict(),
                **self.base_dict()}


class Shifted(ScalarField):
    kind = "shifted"

    def __init__(self, f: ScalarField, c: float):
        super().__init__(f.metric, f.window)
        self.inner = f
        self.c = float(c)
        self.accuracy = f.accuracy
        self.grid_spacing = f.grid_spacing
        lo, hi = f.range_estimate
        self.range_estimate = (lo + self.c, hi + self.c)

    def _eval(self, x):
        return self.inner(x) + self.c

    def to_dict(self):
        return {"kind": self.kind, "f": self.inner.to_dict(), "c": self.c, **self.base_dict()}


@dataclass
class Region:
    """Closed region used to glue two fields: a half-plane or a union of angular sectors."""

    kind: str
    normal: tuple = (0.0, 1.0)
    offset: float = 0.0
    intervals: tuple = ()

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "half_plane":
            return x[..., 0] * self.normal[0] + x[..., 1] * self.normal[1] >= self.offset
        ang = np.mod(np.arctan2(x[..., 1], x[..., 0]), 2 * np.pi)
        inside = np.zeros(ang.shape, dtype=bool)
        for lo, hi in self.intervals:
            inside |= np.mod(ang - lo, 2 * np.pi) <= np.mod(hi - lo, 2 * np.pi)
        return inside

    def to_dict(self):
        if self.kind == "half_plane":
            return {"type": "half_plane", "normal": list(self.normal), "offset": self.offset}
        return {"type": "sectors", "intervals": [list(i) for i in self.intervals]}

    @classmethod
    def from_dict(cls, d):
        if d["type"] == "half_plane":
            return cls("half_plane", tuple(d["normal"]), float(d["offset"]))
        if d["type"] == "sectors":
            return cls("sectors", intervals=tuple(tuple(i) for i in d["intervals"]))
        raise InvalidInput(f"unknown region type {d['type']!r}")


class Glued(ScalarField):
    """f_in on a closed region, f_out elsewhere; the two must agree on the interface."""

    kind = "glued"

    def __init__(self, f_in: ScalarField, f_out: ScalarField, region: Region):
        _same_stage(f_in, f_out)
        super().__init__(f_in.metric, f_in.window)
        self.parts = (f_in, f_out)
        self.region = region
        self.accuracy = "grid" if "grid" in (f_in.accuracy, f_out.accuracy) else "analytic"
        self.grid_spacing = max(f_in.grid_spacing, f_out.grid_spacing)
        (a0, a1), (b0, b1) = f_in.range_estimate, f_out.range_estimate
        self.range_estimate = (min(a0, b0), max(a1, b1))

    def _eval(self, x):
        inside = self.region.contains(x)
        out = np.empty(np.shape(x)[:-1])
        if np.any(inside):
            out[inside] = self.parts[0](x[inside])
        if np.any(~inside):
            out[~inside] = self.parts[1](x[~inside])
        return out

    def to_dict(self):
        return {"kind": self.kind, "f_in": self.parts[0].to_dict(), "f_out": self.parts[1].to_dict(),
                "region": self.region.to_dict(), **self.base_dict()}


class FunctionField(ScalarField):
    """Wraps a plain vectorized callable; used for tests and ad hoc fields."""

    kind = "function"

    def __init__(self, metric: Metric, window: Window, func: Callable, range_estimate=(-np.inf, np.inf),
                 name: str = "function"):
        super().__init__(metric, window, range_estimate)
        self.func = func
        self.name = name

    def _eval(self, x):
        return np.asarray(self.func(x), dtype=float)

    def to_dict(self):
        return {"kind": self.kind, "name": self.name, **self.base_dict()}


# -- public constructors ----------------------------------------------------------

def dist_from_set(m: Metric, N: csg.ClosedSet, window: Window, grid_n: int = DEFAULT_GRID) -> ScalarField:
    return DistFromSet(m, N, window, grid_n).freeze()


def neg_dist_to_set(m: Metric, N: csg.ClosedSet, window: Window, grid_n: int = DEFAULT_GRID) -> ScalarField:
    return NegDistToSet(m, N, window, grid_n).freeze()


def busemann(m: Metric, ray_dir, ray_origin, window: Window, schedule=DEFAULT_SCHEDULE,
             limit: str = "analytic") -> ScalarField:
    return Busemann(m, ray_dir, ray_origin, window, schedule, limit).freeze()


def horofunction(m: Metric, seq: Callable, n_max: int, window: Window, name: str = "custom") -> ScalarField:
    return Horofunction(m, seq, n_max, window, name).freeze()


def wu_eta(m: Metric, basepoint, levels, window: Window, generator: BulgedSphere | None = None) -> ScalarField:
    return WuEta(m, basepoint, levels, window, generator).freeze()


def combine(op: str, f1: ScalarField, f2: ScalarField) -> ScalarField:
    return Combined(op, f1, f2).freeze()


def shifted(f: ScalarField, c: float) -> ScalarField:
    return Shifted(f, c).freeze()


def constant(m: Metric, window: Window, value: float) -> ScalarField:
    return Constant(m, window, value).freeze()


def glued(f_in: ScalarField, f_out: ScalarField, region: Region) -> ScalarField:
    return Glued(f_in, f_out, region).freeze()


def field_from_dict(d: dict) -> ScalarField:
    m = metric_from_dict(d["metric"])
    w = Window.from_list(d["window"], d.get("periodic", False))
    k = d["kind"]
    if k == "dist_from_set":
        return dist_from_set(m, csg.set_from_dict(d["set"]), w)
    if k == "neg_dist_to_set":
        return neg_dist_to_set(m, csg.set_from_dict(d["set"]), w)
    if k == "busemann":
        return busemann(m, d["ray_dir"], d["ray_origin"], w, d.get("schedule", DEFAULT_SCHEDULE),
                        d.get("limit", "analytic"))
    if k == "wu_eta":
        gen = None
        if "generator" in d:
            g = d["generator"]
            if g.get("generator") != "bulged_sphere":
                raise InvalidInput(f"unknown generator {g!r}")
            gen = BulgedSphere([tuple(b) for b in g["bulges"]], g.get("radius", 2.0))
        return wu_eta(m, d["basepoint"], d["levels"], w, gen)
    if k in ("max", "min"):
        return combine(k, field_from_dict(d["f1"]), field_from_dict(d["f2"]))
    if k == "shifted":
        return shifted(field_from_dict(d["f"]), d["c"])
    if k == "constant":
        return constant(m, w, d["value"])
    if k == "glued":
        return glued(field_from_dict(d["f_in"]), field_from_dict(d["f_out"]), Region.from_dict(d["region"]))
    raise InvalidInput(f"field kind {k!r} cannot be loaded from JSON")


# -- Lipschitz characterization ------------------------------------------------

@dataclass
class LipschitzReport:
    max_violation: float
    worst_pair: tuple
    gradient_norm_max: float
    pairs: int
    gradient_samples: int
    skipped_nondifferentiable: int
    tol: float = 1e-6
    passed: bool = False


def _pair_distance(m: Metric, x, y):
    if m.analytic:
        return m.dist(x, y)
    from .geodesic import distance
    return np.array([distance(m, a, b).value for a, b in zip(x, y)])


def check_lipschitz(f: ScalarField, pair_samples: int = 2000, grad_samples: int = 1000, seed: int = 0,
                    tol: float = 1e-6, grad_tol: float = 1e-3) -> LipschitzReport:
    if pair_samples < 1 or grad_samples < 1:
        raise InvalidInput("sample counts must be >= 1")
    rng = np.random.default_rng(seed)
    w, m = f.window, f.metric
    half = pair_samples // 2
    x = w.sample(rng, pair_samples)
    y = w.sample(rng, pair_samples)
    # half of the pairs are short, where a local slope excess shows up first
    step = 0.01 * w.diagonal * rng.uniform(0.05, 1.0, half)
    ang = rng.uniform(0, 2 * np.pi, half)
    y[:half] = x[:half] + step[:, None] * np.stack([np.cos(ang), np.sin(ang)], -1)
    viol = f(y) - f(x) - _pair_distance(m, x, y)
    k = int(np.argmax(viol))
    g = w.sample(rng, grad_samples, margin=2 * f.grad_step)
    fw, bw = f.one_sided(g)
    smooth = np.max(np.abs(fw - bw), axis=-1) <= 1e-4
    norms = m.dual_norm(g[smooth], f.differential(g[smooth])) if smooth.any() else np.zeros(0)
    gmax = float(norms.max()) if norms.size else 0.0
    mv = float(viol[k])
    return LipschitzReport(mv, (x[k].tolist(), y[k].tolist()), gmax, pair_samples, int(smooth.sum()),
                           int((~smooth).sum()), tol, bool(mv <= tol and gmax <= 1 + grad_tol))


# -- export -----------------------------------------------------------------------------

def sample_grid(f: ScalarField, n: int):
    P = f.window.grid(n)
    return P, f(P)
