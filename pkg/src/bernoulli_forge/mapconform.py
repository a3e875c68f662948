"""Exact transforms between the annular problem and the periodic strip problem.

With r = exp(-y) and theta = x (period 2 pi) the annulus around the origin
becomes a horizontal strip; the inner curve lands on top.  Gradients scale by
r: r |grad U_annulus| = |grad U_strip|, so the speeds transform as
a_2(x, y) = r a_hat_1(r, theta) and a_1(x, y) = r a_hat_2(r, theta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import OriginTouched
from .field import FlowSpeed, FlowSpeedPair
from .geom import ArcPair, PeriodicArc
from .potential import Grid, GridSpec, boundary_gradient, solve_potential

TWO_PI = 2.0 * math.pi

AnnularField = Callable[[np.ndarray, np.ndarray], np.ndarray]  # (r, theta) -> speed


@dataclass(frozen=True)
class AnnularCurve:
    """Closed curve around the origin, sampled counter-clockwise as (theta, r)."""

    theta: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=float)
        r = np.asarray(self.r, dtype=float)
        if th.shape != r.shape or th.ndim != 1 or len(th) < 3:
            raise ValueError("theta and r must be 1-D arrays of equal length >= 3")
        if not np.all(np.isfinite(r)) or np.any(r <= 0):
            raise OriginTouched("annular curve touches or encloses the origin degenerately (r <= 0)")
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "r", r)

    @classmethod
    def circle(cls, radius: float, n: int = 256) -> "AnnularCurve":
        th = TWO_PI * np.arange(n) / n
        return cls(th, np.full(n, float(radius)))

    def xy(self) -> np.ndarray:
        return np.column_stack([self.r * np.cos(self.theta), self.r * np.sin(self.theta)])

    def rotated(self, dtheta: float) -> "AnnularCurve":
        return AnnularCurve(np.mod(self.theta + dtheta, TWO_PI), self.r)

    def to_arc(self) -> PeriodicArc:
        x = np.unwrap(self.theta)
        if x[-1] < x[0]:
            raise ValueError("annular curve must be sampled counter-clockwise")
        return PeriodicArc(np.column_stack([x, -np.log(self.r)]), TWO_PI)

    @classmethod
    def from_arc(cls, arc: PeriodicArc) -> "AnnularCurve":
        if not math.isclose(arc.period, TWO_PI, rel_tol=1e-12):
            raise ValueError("rescale the arc to period 2 pi first")
        v = arc.vertices
        return cls(np.mod(v[:, 0], TWO_PI), np.exp(-v[:, 1]))


@dataclass
class AnnularProblem:
    inner: AnnularCurve
    outer: AnnularCurve
    a_inner: AnnularField
    a_outer: AnnularField

    def __post_init__(self):
        # inner strictly inside outer: compare radii along common angles
        ro = np.interp(self.inner.theta, self.outer.theta, self.outer.r, period=TWO_PI)
        if np.any(self.inner.r >= ro):
            raise ValueError("inner curve must lie strictly inside the outer curve")


class _PulledBack(FlowSpeed):
    """Strip speed r * a_hat(r, theta) at r = exp(-y), theta = x."""

    def __init__(self, a_hat: AnnularField, scale: float = 1.0):
        super().__init__(TWO_PI)
        self.a_hat = a_hat
        self.scale = float(scale)

    def eval(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        r = np.exp(-y)
        return self.scale * r * np.asarray(self.a_hat(r, np.mod(x, TWO_PI)), dtype=float)

    def __repr__(self):
        return f"PulledBack({self.a_hat!r})"


def annular_to_periodic(prob: AnnularProblem) -> tuple[ArcPair, FlowSpeedPair]:
    """Map to the strip; the outer curve becomes gamma1, the inner one gamma2."""
    g1 = prob.outer.to_arc()
    g2 = prob.inner.to_arc()
    a1 = _PulledBack(prob.a_outer)
    a2 = _PulledBack(prob.a_inner)
    return ArcPair(g1, g2), FlowSpeedPair(a1, a2, 1.0, 1.0)


def _rescaled(pair: ArcPair, fields: FlowSpeedPair) -> tuple[ArcPair, Callable, Callable]:
    """Rescale x by 2 pi / P; lengths shrink by s, so speeds grow by 1/s."""
    P = pair.period
    s = TWO_PI / P

    def arc(a: PeriodicArc) -> PeriodicArc:
        return PeriodicArc(a.vertices * s, TWO_PI)

    def speed(i):
        def f(x, y):
            return fields.speed(i, np.asarray(x) / s, np.asarray(y) / s) / s

        return f

    return ArcPair(arc(pair.gamma1), arc(pair.gamma2)), speed(1), speed(2)


def periodic_to_annular(pair: ArcPair, fields: FlowSpeedPair) -> AnnularProblem:
    """Inverse of :func:`annular_to_periodic`; lambdas are absorbed into the speeds."""
    p, s1, s2 = _rescaled(pair, fields)
    inner = AnnularCurve.from_arc(p.gamma2)
    outer = AnnularCurve.from_arc(p.gamma1)

    def a_inner(r, th):
        return s2(th, -np.log(r)) / r

    def a_outer(r, th):
        return s1(th, -np.log(r)) / r

    return AnnularProblem(inner, outer, a_inner, a_outer)


def annular_residual(prob: AnnularProblem, grid: GridSpec) -> float:
    """Max over both curves of | |grad U_annulus| - a_hat |, solved on the strip."""
    pair, _ = annular_to_periodic(prob)
    spec = grid if grid.ylo is not None else grid.window_for(pair)
    U = solve_potential(pair, spec, grid=Grid.from_spec(spec, TWO_PI))
    res = 0.0
    for which, a_hat in ((1, prob.a_outer), (2, prob.a_inner)):
        bs = boundary_gradient(U, which)
        r = np.exp(-bs.points[:, 1])
        th = np.mod(bs.points[:, 0], TWO_PI)
        grad_ann = bs.values / r
        res = max(res, float(np.max(np.abs(grad_ann - np.asarray(a_hat(r, th), dtype=float)))))
    return res


def periodic_residual(pair: ArcPair, fields: FlowSpeedPair, grid: GridSpec) -> float:
    spec = grid if grid.ylo is not None else grid.window_for(pair)
    U = solve_potential(pair, spec, grid=Grid.from_spec(spec, pair.period))
    res = 0.0
    for which in (1, 2):
        bs = boundary_gradient(U, which)
        t = fields.speed(which, bs.points[:, 0], bs.points[:, 1])
        res = max(res, float(np.max(np.abs(bs.values - t))))
    return res


def write_annular_csv(path, curve: AnnularCurve) -> None:
    with open(path, "w") as fh:
        fh.write("theta,r\n")
        for t, r in zip(curve.theta, curve.r):
            fh.write(f"{float(t)!r},{float(r)!r}\n")


def read_annular_csv(path) -> AnnularCurve:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return AnnularCurve(data[:, 0], data[:, 1])
