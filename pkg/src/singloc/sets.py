"""Closed planar sets as CSG trees of disks, half-planes and points.

Membership uses a level function (negative inside, positive outside).
Euclidean distance to a set is exact: the boundary is assembled from
primitive boundary pieces (arcs, segments, points) split at mutual
intersections, keeping pieces that separate inside from outside.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput

TWO_PI = 2.0 * np.pi
_LINE_EXTENT = 1e4


class ClosedSet:
    truncation: int | None = None

    def level(self, x):
        raise NotImplementedError

    def contains(self, x, tol: float = 1e-12):
        return self.level(x) <= tol

    def primitives(self) -> list:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def is_empty_hint(self) -> bool:
        return False

    # convenience constructors
    def __or__(self, other):
        return Union([self, other])

    def __and__(self, other):
        return Intersection([self, other])

    def __sub__(self, other):
        return Difference(self, other)


@dataclass(eq=False)
class Disk(ClosedSet):
    center: tuple
    radius: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if not self.radius > 0:
            raise InvalidInput("disk radius must be positive")

    def level(self, x):
        d = np.asarray(x, float) - self.center
        return np.hypot(d[..., 0], d[..., 1]) - self.radius

    def primitives(self):
        return [self]

    def to_dict(self):
        return {"type": "disk", "center": self.center.tolist(), "radius": float(self.radius)}


@dataclass(eq=False)
class HalfPlane(ClosedSet):
    """{x : normal . x <= offset} with a unit normal."""

    normal: tuple
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        nn = np.hypot(*n)
        if nn == 0:
            raise InvalidInput("half-plane normal must be nonzero")
        self.normal = n / nn
        self.offset = float(self.offset) / nn

    def level(self, x):
        x = np.asarray(x, float)
        return x[..., 0] * self.normal[0] + x[..., 1] * self.normal[1] - self.offset

    def primitives(self):
        return [self]

    def to_dict(self):
        return {"type": "half_plane", "normal": self.normal.tolist(), "offset": self.offset}


@dataclass(eq=False)
class PointSet(ClosedSet):
    point: tuple

    def __post_init__(self):
        self.point = np.asarray(self.point, dtype=float)

    def level(self, x):
        d = np.asarray(x, float) - self.point
        return np.hypot(d[..., 0], d[..., 1])

    def primitives(self):
        return [self]

    def to_dict(self):
        return {"type": "point", "point": self.point.tolist()}


class Complement(ClosedSet):
    """Closure of the complement."""

    def __init__(self, inner: ClosedSet):
        self.inner = inner

    def level(self, x):
        return -self.inner.level(x)

    def primitives(self):
        return self.inner.primitives()

    def to_dict(self):
        return {"type": "complement", "inner": self.inner.to_dict()}


class Union(ClosedSet):
    def __init__(self, parts, truncation: int | None = None):
        self.parts = list(parts)
        if not self.parts:
            raise InvalidInput("union needs at least one part")
        self.truncation = truncation

    def level(self, x):
        return np.min(np.stack([p.level(x) for p in self.parts]), axis=0)

    def primitives(self):
        return [q for p in self.parts for q in p.primitives()]

    def to_dict(self):
        d = {"type": "union", "parts": [p.to_dict() for p in self.parts]}
        if self.truncation is not None:
            d["truncation"] = self.truncation
        return d


class Intersection(ClosedSet):
    def __init__(self, parts):
        self.parts = list(parts)
        if not self.parts:
            raise InvalidInput("intersection needs at least one part")

    def level(self, x):
        return np.max(np.stack([p.level(x) for p in self.parts]), axis=0)

    def primitives(self):
        return [q for p in self.parts for q in p.primitives()]

    def to_dict(self):
        return {"type": "intersection", "parts": [p.to_dict() for p in self.parts]}


class Difference(ClosedSet):
    """A minus the interior of B (stays closed)."""

    def __init__(self, a: ClosedSet, b: ClosedSet, truncation: int | None = None):
        self.a, self.b = a, b
        self.truncation = truncation

    def level(self, x):
        return np.maximum(self.a.level(x), -self.b.level(x))

    def primitives(self):
        return self.a.primitives() + self.b.primitives()

    def to_dict(self):
        d = {"type": "difference", "a": self.a.to_dict(), "b": self.b.to_dict()}
        if self.truncation is not None:
            d["truncation"] = self.truncation
        return d


def set_from_dict(d: dict) -> ClosedSet:
    t = d.get("type")
    if t == "disk":
        return Disk(d["center"], d["radius"])
    if t == "half_plane":
        return HalfPlane(d["normal"], d["offset"])
    if t == "point":
        return PointSet(d["point"])
    if t == "complement":
        return Complement(set_from_dict(d["inner"]))
    if t == "union":
        return Union([set_from_dict(p) for p in d["parts"]], d.get("truncation"))
    if t == "intersection":
        return Intersection([set_from_dict(p) for p in d["parts"]])
    if t == "difference":
        return Difference(set_from_dict(d["a"]), set_from_dict(d["b"]), d.get("truncation"))
    raise InvalidInput(f"unknown set type {t!r}")


def points_set(points) -> ClosedSet:
    pts = [PointSet(p) for p in np.asarray(points, dtype=float).reshape(-1, 2)]
    return pts[0] if len(pts) == 1 else Union(pts)


# -- boundary extraction ------------------------------------------------------

def _circle_circle(c1, r1, c2, r2):
    d = c2 - c1
    dist = np.hypot(*d)
    if dist == 0 or dist > r1 + r2 or dist < abs(r1 - r2):
        return []
    a = (r1 * r1 - r2 * r2 + dist * dist) / (2 * dist)
    h2 = r1 * r1 - a * a
    h = np.sqrt(max(h2, 0.0))
    base = c1 + a * d / dist
    perp = np.array([-d[1], d[0]]) / dist
    if h == 0:
        return [base]
    return [base + h * perp, base - h * perp]


def _circle_line(c, r, n, off):
    # line n.x = off
    s = off - n @ c
    if abs(s) > r:
        return []
    foot = c + s * n
    h = np.sqrt(max(r * r - s * s, 0.0))
    t = np.array([-n[1], n[0]])
    if h == 0:
        return [foot]
    return [foot + h * t, foot - h * t]


def _line_line(n1, o1, n2, o2):
    A = np.array([n1, n2])
    if abs(np.linalg.det(A)) < 1e-14:
        return []
    return [np.linalg.solve(A, np.array([o1, o2]))]


def _dedupe_angles(angs, tol: float = 1e-11):
    out = []
    for a in sorted(angs):
        if not out or a - out[-1] > tol:
            out.append(a)
    if len(out) > 1 and out[0] + TWO_PI - out[-1] <= tol:
        out.pop()
    return out


@dataclass
class Boundary:
    # arcs: center (A,2), radius (A,), start angle (A,), span (A,)
    arc_c: np.ndarray
    arc_r: np.ndarray
    arc_a0: np.ndarray
    arc_span: np.ndarray
    # segments: endpoints (S,2),(S,2)
    seg_a: np.ndarray
    seg_b: np.ndarray
    # isolated points (P,2)
    pts: np.ndarray

    @property
    def size(self) -> int:
        return len(self.arc_r) + len(self.seg_a) + len(self.pts)


def extract_boundary(S: ClosedSet, eps: float = 1e-9) -> Boundary:
    prims = S.primitives()
    circles = [p for p in prims if isinstance(p, Disk)]
    lines = [p for p in prims if isinstance(p, HalfPlane)]
    points = [p for p in prims if isinstance(p, PointSet)]

    def separates(m, normal):
        scale = max(1.0, float(np.hypot(*m)))
        e = eps * scale
        inside_a = S.level(m - e * normal) <= 0
        inside_b = S.level(m + e * normal) <= 0
        return bool(inside_a != inside_b)

    arcs = []
    for i, c in enumerate(circles):
        cuts = []
        for j, o in enumerate(circles):
            if j != i:
                cuts += _circle_circle(c.center, c.radius, o.center, o.radius)
        for ln in lines:
            cuts += _circle_line(c.center, c.radius, ln.normal, ln.offset)
        angs = _dedupe_angles([float(np.mod(np.arctan2(*(q - c.center)[::-1]), TWO_PI)) for q in cuts])
        if not angs:
            pieces = [(0.0, TWO_PI)]
        else:
            pieces = []
            for k, a in enumerate(angs):
                b = angs[(k + 1) % len(angs)]
                span = np.mod(b - a, TWO_PI)
                if span == 0:
                    span = TWO_PI
                pieces.append((a, span))
        for a, span in pieces:
            mid = a + 0.5 * span
            u = np.array([np.cos(mid), np.sin(mid)])
            m = c.center + c.radius * u
            if separates(m, u):
                arcs.append((c.center, c.radius, a, span))

    segs = []
    for i, ln in enumerate(lines):
        t = np.array([-ln.normal[1], ln.normal[0]])
        o = ln.offset * ln.normal
        cuts = []
        for c in circles:
            cuts += _circle_line(c.center, c.radius, ln.normal, ln.offset)
        for j, l2 in enumerate(lines):
            if j != i:
                cuts += _line_line(ln.normal, ln.offset, l2.normal, l2.offset)
        params = sorted({float((q - o) @ t) for q in cuts})
        params = [-_LINE_EXTENT] + [s for s in params if abs(s) < _LINE_EXTENT] + [_LINE_EXTENT]
        for a, b in zip(params[:-1], params[1:]):
            if b - a <= 0:
                continue
            m = o + 0.5 * (a + b) * t
            if separates(m, ln.normal):
                segs.append((o + a * t, o + b * t))

    pts = []
    for p in points:
        if S.level(p.point) > 1e-12:
            continue
        scale = max(1.0, float(np.hypot(*p.point)))
        ring = p.point + eps * scale * np.array([[1, 0], [0, 1], [-1, 0], [0, -1], [0.6, 0.8]])
        if np.any(S.level(ring) > 0):
            pts.append(p.point)

    def arr(items, k, shape):
        return np.array([it[k] for it in items], dtype=float).reshape(shape)

    return Boundary(
        arc_c=arr(arcs, 0, (-1, 2)), arc_r=arr(arcs, 1, (-1,)),
        arc_a0=arr(arcs, 2, (-1,)), arc_span=arr(arcs, 3, (-1,)),
        seg_a=arr(segs, 0, (-1, 2)), seg_b=arr(segs, 1, (-1, 2)),
        pts=np.array(pts, dtype=float).reshape(-1, 2),
    )


def boundary_distance(b: Boundary, x: np.ndarray, chunk: int = 20000) -> np.ndarray:
    """Euclidean distance from points x (..., 2) to the boundary pieces."""
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1, 2)
    out = np.full(len(flat), np.inf)
    if len(b.arc_r):
        am = b.arc_a0 + 0.5 * b.arc_span
        mid = np.stack([np.cos(am), np.sin(am)], -1)
        half_cos = np.cos(0.5 * b.arc_span)[None, :]
        e0 = b.arc_c + b.arc_r[:, None] * np.stack([np.cos(b.arc_a0), np.sin(b.arc_a0)], -1)
        a1 = b.arc_a0 + b.arc_span
        e1 = b.arc_c + b.arc_r[:, None] * np.stack([np.cos(a1), np.sin(a1)], -1)
    for s in range(0, len(flat), chunk):
        q = flat[s:s + chunk]
        best = np.full(len(q), np.inf)
        if len(b.arc_r):
            d = q[:, None, :] - b.arc_c[None, :, :]
            rho = np.hypot(d[..., 0], d[..., 1])
            # on the arc iff the angle to the arc midpoint is at most half the span
            on = (d[..., 0] * mid[:, 0] + d[..., 1] * mid[:, 1]) >= rho * half_cos
            radial = np.abs(rho - b.arc_r[None, :])
            d0 = (q[:, None, 0] - e0[:, 0]) ** 2 + (q[:, None, 1] - e0[:, 1]) ** 2
            d1 = (q[:, None, 0] - e1[:, 0]) ** 2 + (q[:, None, 1] - e1[:, 1]) ** 2
            best = np.minimum(best, np.where(on, radial, np.sqrt(np.minimum(d0, d1))).min(axis=1))
        if len(b.seg_a):
            ab = b.seg_b - b.seg_a
            L2 = (ab ** 2).sum(-1)
            aq = q[:, None, :] - b.seg_a[None]
            t = np.clip((aq * ab[None]).sum(-1) / L2[None], 0.0, 1.0)
            proj = b.seg_a[None] + t[..., None] * ab[None]
            dd = np.hypot(*(q[:, None, :] - proj).transpose(2, 0, 1))
            best = np.minimum(best, dd.min(axis=1))
        if len(b.pts):
            dd = np.hypot(*(q[:, None, :] - b.pts[None]).transpose(2, 0, 1))
            best = np.minimum(best, dd.min(axis=1))
        out[s:s + chunk] = best
    return out.reshape(x.shape[:-1])


def euclidean_distance(S: ClosedSet, x, boundary: Boundary | None = None) -> np.ndarray:
    b = boundary if boundary is not None else extract_boundary(S)
    x = np.asarray(x, dtype=float)
    d = boundary_distance(b, x)
    return np.where(S.level(x) <= 0, 0.0, d)
