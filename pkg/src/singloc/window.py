"""Rectangular computational windows and sampling grids."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput


@dataclass(frozen=True)
class Window:
    x0: float
    x1: float
    y0: float
    y1: float
    # periodic windows sample [x0, x1) so that the seam is not duplicated
    periodic: bool = False

    def __post_init__(self):
        vals = (self.x0, self.x1, self.y0, self.y1)
        if not all(np.isfinite(v) for v in vals) or self.x1 <= self.x0 or self.y1 <= self.y0:
            raise InvalidInput(f"degenerate window {vals}")

    @classmethod
    def square(cls, half: float, periodic: bool = False) -> "Window":
        return cls(-half, half, -half, half, periodic)

    @property
    def diagonal(self) -> float:
        return float(np.hypot(self.x1 - self.x0, self.y1 - self.y0))

    def contains(self, pts, pad: float = 0.0):
        pts = np.asarray(pts, dtype=float)
        return ((pts[..., 0] >= self.x0 - pad) & (pts[..., 0] <= self.x1 + pad)
                & (pts[..., 1] >= self.y0 - pad) & (pts[..., 1] <= self.y1 + pad))

    def axes(self, n: int):
        if n < 2:
            raise InvalidInput("grid needs at least 2 samples per axis")
        if self.periodic:
            xs = self.x0 + (self.x1 - self.x0) * np.arange(n) / n
            ys = self.y0 + (self.y1 - self.y0) * np.arange(n) / n
        else:
            xs = np.linspace(self.x0, self.x1, n)
            ys = np.linspace(self.y0, self.y1, n)
        return xs, ys

    def spacing(self, n: int) -> float:
        xs, ys = self.axes(n)
        return float(max(xs[1] - xs[0], ys[1] - ys[0]))

    def grid(self, n: int) -> np.ndarray:
        """Points of shape (n, n, 2) indexed [row=y, col=x]."""
        xs, ys = self.axes(n)
        X, Y = np.meshgrid(xs, ys)
        return np.stack([X, Y], axis=-1)

    def sample(self, rng: np.random.Generator, count: int, margin: float = 0.0) -> np.ndarray:
        return np.column_stack([rng.uniform(self.x0 + margin, self.x1 - margin, count),
                                rng.uniform(self.y0 + margin, self.y1 - margin, count)])

    def to_list(self):
        return [self.x0, self.x1, self.y0, self.y1]

    @classmethod
    def from_list(cls, vals, periodic: bool = False) -> "Window":
        if len(vals) != 4:
            raise InvalidInput("window needs [x0, x1, y0, y1]")
        return cls(*(float(v) for v in vals), periodic=periodic)
