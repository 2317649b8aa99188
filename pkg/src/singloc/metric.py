"""Planar Finsler structures.

Every metric evaluates the norm F(x, v), the fundamental tensor
g_v = 1/2 Hess_v F^2, and the geodesic spray acceleration on a single
global chart. All evaluations are vectorized over leading axes: points and
vectors have shape (..., 2).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import DomainError, InvalidInput, InvalidMetric

_ZERO = 1e-300


class Tangent2(NamedTuple):
    base: np.ndarray
    v: np.ndarray


@dataclass
class ValidationReport:
    samples: int
    homogeneity_residual: float
    min_eigenvalue: float
    passed: bool


def _as2(a, name="array") -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.shape[-1:] != (2,):
        raise InvalidInput(f"{name} must have trailing dimension 2, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} has non-finite entries")
    return arr


def _dot(a, b):
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1]


class Metric:
    """Base class. Subclasses override the vectorized primitives."""

    kind = "abstract"
    # geodesics are straight chart lines (zero spray)
    straight = False
    # closed-form point-to-point distance available
    analytic = False
    periods: tuple[float, float] | None = None

    def norm(self, x, v):
        raise NotImplementedError

    def tensor(self, x, v):
        raise NotImplementedError

    def spray(self, x, v):
        v = np.asarray(v, dtype=float)
        return np.zeros_like(v)

    def dual_norm(self, x, w):
        """F*(w) = max over F(v) <= 1 of w(v)."""
        x, w = np.broadcast_arrays(np.asarray(x, float), np.asarray(w, float))
        ang = np.linspace(0.0, 2 * np.pi, 721)[:-1]
        u = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        vals = _dot(w[..., None, :], u) / self.norm(x[..., None, :], u)
        return vals.max(axis=-1)

    def legendre(self, x, w):
        """F-unit vector v maximizing w(v); the gradient direction of a covector."""
        from scipy.optimize import minimize_scalar

        x = np.asarray(x, float)
        w = np.asarray(w, float)
        out = np.empty(np.broadcast_shapes(x.shape, w.shape))
        xb, wb = np.broadcast_arrays(x, w)
        for idx in np.ndindex(out.shape[:-1]):
            xi, wi = xb[idx], wb[idx]

            def neg(a):
                u = np.array([np.cos(a), np.sin(a)])
                return -float(wi @ u) / float(self.norm(xi, u))

            a0 = np.arctan2(wi[1], wi[0])
            res = minimize_scalar(neg, bounds=(a0 - 1.5, a0 + 1.5), method="bounded",
                                  options={"xatol": 1e-12})
            u = np.array([np.cos(res.x), np.sin(res.x)])
            out[idx] = u / self.norm(xi, u)
        return out

    def reverse(self) -> "Metric":
        return Reversed(self)

    def wrap(self, pts):
        return np.asarray(pts, dtype=float)

    def dist(self, p, q):
        raise NotImplementedError(f"no closed-form distance for {self.kind}")

    def image_offsets(self, p, q):
        """Chart displacements realizing geodesics from p to q (straight metrics)."""
        return [np.asarray(q, float) - np.asarray(p, float)]

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __eq__(self, other):
        return isinstance(other, Metric) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(repr(self.to_dict()))


class Euclidean(Metric):
    kind = "euclidean"
    straight = True
    analytic = True

    def norm(self, x, v):
        v = np.asarray(v, dtype=float)
        return np.hypot(v[..., 0], v[..., 1])

    def tensor(self, x, v):
        v = np.asarray(v, dtype=float)
        return np.broadcast_to(np.eye(2), v.shape[:-1] + (2, 2)).copy()

    def dual_norm(self, x, w):
        w = np.asarray(w, dtype=float)
        return np.hypot(w[..., 0], w[..., 1])

    def legendre(self, x, w):
        w = np.asarray(w, dtype=float)
        return w / np.maximum(np.hypot(w[..., 0], w[..., 1]), _ZERO)[..., None]

    def reverse(self):
        return self

    def dist(self, p, q):
        d = np.asarray(q, float) - np.asarray(p, float)
        return np.hypot(d[..., 0], d[..., 1])

    def to_dict(self):
        return {"kind": "euclidean"}


class FlatTorus(Euclidean):
    """Quotient of the Euclidean plane by the lattice Lx Z x Ly Z."""

    kind = "flat_torus"

    def __init__(self, lx: float = 1.0, ly: float = 1.0):
        if not (lx > 0 and ly > 0 and np.isfinite(lx) and np.isfinite(ly)):
            raise InvalidMetric("torus periods must be positive and finite")
        self.periods = (float(lx), float(ly))

    def wrap(self, pts):
        pts = np.asarray(pts, dtype=float)
        return np.mod(pts, self.periods)

    def _minimal_image(self, d):
        L = np.asarray(self.periods)
        return d - L * np.round(d / L)

    def dist(self, p, q):
        d = self._minimal_image(np.asarray(q, float) - np.asarray(p, float))
        return np.hypot(d[..., 0], d[..., 1])

    def image_offsets(self, p, q, length_tol: float = 1e-5):
        d0 = self._minimal_image(np.asarray(q, float) - np.asarray(p, float))
        L = np.asarray(self.periods)
        cands = [d0 + L * np.array([i, j]) for i in (-1, 0, 1) for j in (-1, 0, 1)]
        lens = np.array([np.hypot(*c) for c in cands])
        best = lens.min()
        return [c for c, l in zip(cands, lens) if l <= best + length_tol]

    def reverse(self):
        return self

    def to_dict(self):
        return {"kind": "flat_torus", "periods": list(self.periods)}


class Riemannian(Metric):
    """F(x, v) = sqrt(v^T A(x) v) for a user tensor field A.

    ``tensor_field`` maps points of shape (..., 2) to matrices (..., 2, 2).
    """

    kind = "riemannian"

    def __init__(self, tensor_field: Callable | None = None, matrix=None, fd_step: float = 1e-6):
        if matrix is not None:
            mat = np.asarray(matrix, dtype=float)
            if mat.shape != (2, 2) or not np.allclose(mat, mat.T):
                raise InvalidMetric("matrix must be symmetric 2x2")
            if np.linalg.eigvalsh(mat).min() <= 0:
                raise InvalidMetric("matrix must be positive definite")
            self.matrix = mat
            tensor_field = lambda x, _m=mat: np.broadcast_to(_m, np.shape(x)[:-1] + (2, 2))
            self.straight = True
            self.analytic = True
        elif tensor_field is None:
            raise InvalidMetric("riemannian metric needs a tensor field or a matrix")
        else:
            self.matrix = None
        self._a = tensor_field
        self._h = fd_step

    def field(self, x):
        return np.asarray(self._a(np.asarray(x, dtype=float)), dtype=float)

    def norm(self, x, v):
        v = np.asarray(v, dtype=float)
        a = self.field(np.broadcast_to(np.asarray(x, float), v.shape))
        q = np.einsum("...i,...ij,...j->...", v, a, v)
        return np.sqrt(np.maximum(q, 0.0))

    def tensor(self, x, v):
        v = np.asarray(v, dtype=float)
        return self.field(np.broadcast_to(np.asarray(x, float), v.shape)).copy()

    def christoffel(self, x):
        """Gamma^i_jk at x, shape (..., 2, 2, 2), from central differences of A."""
        x = np.asarray(x, dtype=float)
        h = self._h
        da = []
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            da.append((self.field(x + e) - self.field(x - e)) / (2 * h))
        da = np.stack(da, axis=-1)  # (..., i, j, k) = d_k a_ij
        ainv = np.linalg.inv(self.field(x))
        # Gamma_ljk = 1/2 (d_j a_lk + d_k a_lj - d_l a_jk)
        low = 0.5 * (np.swapaxes(da, -1, -2) + da - np.moveaxis(da, -1, -3))
        return np.einsum("...il,...ljk->...ijk", ainv, low)

    def spray(self, x, v):
        if self.straight:
            return np.zeros_like(np.asarray(v, dtype=float))
        gam = self.christoffel(x)
        return -np.einsum("...ijk,...j,...k->...i", gam, v, v)

    def dual_norm(self, x, w):
        w = np.asarray(w, dtype=float)
        ainv = np.linalg.inv(self.field(np.broadcast_to(np.asarray(x, float), w.shape)))
        return np.sqrt(np.einsum("...i,...ij,...j->...", w, ainv, w))

    def legendre(self, x, w):
        w = np.asarray(w, dtype=float)
        ainv = np.linalg.inv(self.field(np.broadcast_to(np.asarray(x, float), w.shape)))
        v = np.einsum("...ij,...j->...i", ainv, w)
        return v / self.norm(x, v)[..., None]

    def dist(self, p, q):
        if self.matrix is None:
            return super().dist(p, q)
        return self.norm(p, np.asarray(q, float) - np.asarray(p, float))

    def reverse(self):
        return self

    def to_dict(self):
        if self.matrix is None:
            return {"kind": "riemannian", "tensor": "callback"}
        return {"kind": "riemannian", "matrix": self.matrix.tolist()}

    def __eq__(self, other):
        if self.matrix is None:
            return self is other
        return super().__eq__(other)

    __hash__ = Metric.__hash__


class RandersZermelo(Metric):
    """Zermelo navigation metric for a constant wind W with |W| < 1.

    The unit ball at every point is the Euclidean unit disk translated by W,
    so F(v) is the positive root of |v - F W| = F.
    """

    kind = "randers_zermelo"
    straight = True
    analytic = True

    def __init__(self, wind):
        w = np.asarray(wind, dtype=float)
        if w.shape != (2,) or not np.all(np.isfinite(w)):
            raise InvalidInput("wind must be a finite 2-vector")
        if np.hypot(*w) >= 1.0:
            raise InvalidMetric(f"wind {w.tolist()} violates |W| < 1")
        self.wind = w
        self._lam = 1.0 - float(w @ w)

    def norm(self, x, v):
        v = np.asarray(v, dtype=float)
        vw = v[..., 0] * self.wind[0] + v[..., 1] * self.wind[1]
        vv = v[..., 0] ** 2 + v[..., 1] ** 2
        return (-vw + np.sqrt(vw * vw + self._lam * vv)) / self._lam

    def tensor(self, x, v):
        v = np.asarray(v, dtype=float)
        lam, w = self._lam, self.wind
        a = (lam * np.eye(2) + np.outer(w, w)) / lam**2
        b = -w / lam
        av = v @ a
        alpha = np.sqrt(np.einsum("...i,...i->...", av, v))
        if np.any(alpha <= 0):
            raise DomainError("fundamental tensor undefined on the zero section")
        F = alpha + v @ b
        ell = av / alpha[..., None]
        lb = ell + b
        return ((F / alpha)[..., None, None] * (a - ell[..., :, None] * ell[..., None, :])
                + lb[..., :, None] * lb[..., None, :])

    def dual_norm(self, x, w):
        w = np.asarray(w, dtype=float)
        return np.hypot(w[..., 0], w[..., 1]) + w[..., 0] * self.wind[0] + w[..., 1] * self.wind[1]

    def legendre(self, x, w):
        w = np.asarray(w, dtype=float)
        n = np.maximum(np.hypot(w[..., 0], w[..., 1]), _ZERO)
        return self.wind + w / n[..., None]

    def reverse(self):
        return RandersZermelo(-self.wind)

    def dist(self, p, q):
        return self.norm(p, np.asarray(q, float) - np.asarray(p, float))

    def to_dict(self):
        return {"kind": "randers_zermelo", "wind": self.wind.tolist()}


class Reversed(Metric):
    """The reversed structure F_rev(x, v) = F(x, -v)."""

    kind = "reversed"

    def __init__(self, inner: Metric):
        self.inner = inner
        self.straight = inner.straight
        self.analytic = inner.analytic
        self.periods = inner.periods

    def norm(self, x, v):
        return self.inner.norm(x, -np.asarray(v, dtype=float))

    def tensor(self, x, v):
        return self.inner.tensor(x, -np.asarray(v, dtype=float))

    def spray(self, x, v):
        return self.inner.spray(x, -np.asarray(v, dtype=float))

    def dual_norm(self, x, w):
        return self.inner.dual_norm(x, -np.asarray(w, dtype=float))

    def legendre(self, x, w):
        return -self.inner.legendre(x, -np.asarray(w, dtype=float))

    def reverse(self):
        return self.inner

    def wrap(self, pts):
        return self.inner.wrap(pts)

    def dist(self, p, q):
        return self.inner.dist(q, p)

    def image_offsets(self, p, q, *args, **kw):
        return [-d for d in self.inner.image_offsets(q, p, *args, **kw)]

    def to_dict(self):
        return {"kind": "reversed", "inner": self.inner.to_dict()}


def metric_from_dict(d: dict) -> Metric:
    kind = d.get("kind")
    if kind == "euclidean":
        return Euclidean()
    if kind == "flat_torus":
        lx, ly = d.get("periods", [1.0, 1.0])
        return FlatTorus(lx, ly)
    if kind == "randers_zermelo":
        return RandersZermelo(d["wind"])
    if kind == "riemannian":
        if "matrix" not in d:
            raise InvalidInput("riemannian metrics from JSON need a constant 'matrix'")
        return Riemannian(matrix=d["matrix"])
    if kind == "reversed":
        return Reversed(metric_from_dict(d["inner"]))
    raise InvalidInput(f"unknown metric kind {kind!r}")


# -- module-level operations -------------------------------------------------

def eval_norm(m: Metric, t: Tangent2) -> float:
    base = _as2(t.base, "base")
    v = _as2(t.v, "v")
    return m.norm(base, v)


def fundamental_tensor(m: Metric, t: Tangent2) -> np.ndarray:
    base = _as2(t.base, "base")
    v = _as2(t.v, "v")
    if np.any(np.hypot(v[..., 0], v[..., 1]) == 0):
        raise DomainError("fundamental tensor is undefined on the zero section")
    return m.tensor(base, v)


def spray_acceleration(m: Metric, t: Tangent2) -> np.ndarray:
    base = _as2(t.base, "base")
    v = _as2(t.v, "v")
    if np.any(np.hypot(v[..., 0], v[..., 1]) == 0):
        raise DomainError("spray is undefined on the zero section")
    return m.spray(base, v)


def reverse(m: Metric) -> Metric:
    return m.reverse()


def covector(m: Metric, x, w) -> np.ndarray:
    """Components of u -> g_w(w, u), the Legendre dual of the direction w."""
    w = np.asarray(w, dtype=float)
    return np.einsum("...ij,...j->...i", m.tensor(x, w), w)


def validate_metric(m: Metric, sample_count: int, seed: int = 0,
                    window: tuple[float, float, float, float] = (-1.0, 1.0, -1.0, 1.0)) -> ValidationReport:
    if sample_count < 1:
        raise InvalidInput("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    x0, x1, y0, y1 = window
    x = np.column_stack([rng.uniform(x0, x1, sample_count), rng.uniform(y0, y1, sample_count)])
    ang = rng.uniform(0, 2 * np.pi, sample_count)
    v = np.column_stack([np.cos(ang), np.sin(ang)]) * rng.uniform(0.1, 3.0, sample_count)[:, None]
    lam = rng.uniform(0.05, 20.0, sample_count)
    f1 = m.norm(x, v)
    f2 = m.norm(x, lam[:, None] * v)
    resid = float(np.max(np.abs(f2 - lam * f1) / (lam * f1)))
    eig = float(np.linalg.eigvalsh(m.tensor(x, v)).min())
    return ValidationReport(sample_count, resid, eig, bool(resid < 1e-9 and eig > 0))
