"""Reduced models: the one-dimensional two-point problem and the narrow-stream flow.

In one dimension a pair x1 < x2 solves the problem when
b1(x1) = x2 - x1 = b2(x2), with b_i = 1/a_i the reciprocal speeds.  The
operator T_eps moves each endpoint by the implicit relations

    x1* + eps b1(x1*) = (1 - eps) x1 + eps x2
    x2* - eps b2(x2*) = eps x1 + (1 - eps) x2

and its fixed points are exactly the solutions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import CurveDegenerate, NoConvergence, RootNotBracketed, StepUnstable
from .field import FlowSpeed
from .geom import PeriodicArc, resample_fast


@dataclass(frozen=True, order=True)
class OneDimPair:
    x1: float
    x2: float

    def __post_init__(self):
        if not self.x1 < self.x2:
            raise ValueError(f"need x1 < x2, got ({self.x1}, {self.x2})")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    def le(self, other: "OneDimPair") -> bool:
        return self.x1 <= other.x1 and self.x2 <= other.x2

    def as_tuple(self) -> tuple[float, float]:
        return (self.x1, self.x2)


def _vec(b: Callable) -> Callable:
    return lambda x: np.asarray(b(np.asarray(x, dtype=float)), dtype=float)


@dataclass
class OneDimProblem:
    """Reciprocal speeds b1, b2 with the class bounds b >= b_lo and |b'| <= B1."""

    b1: Callable
    b2: Callable
    b_lo: float
    B1: float

    @property
    def eta0(self) -> float:
        return 0.5 if self.B1 == 0 else min(0.5, 1.0 / (2.0 * self.B1))

    @classmethod
    def sampled(cls, b1: Callable, b2: Callable | None = None, window=(-10.0, 10.0), n: int = 20001) -> "OneDimProblem":
        """Estimate the bounds by sampling both functions on ``window``."""
        b2 = b1 if b2 is None else b2
        x = np.linspace(window[0], window[1], n)
        lo, d1 = math.inf, 0.0
        for b in (b1, b2):
            v = np.broadcast_to(_vec(b)(x), x.shape)
            lo = min(lo, float(v.min()))
            d1 = max(d1, float(np.max(np.abs(np.gradient(v, x)))))
        if lo <= 0:
            raise ValueError("reciprocal speeds must be positive")
        return cls(b1, b2, lo, d1)

    @classmethod
    def from_speeds(cls, a1: Callable, a2: Callable | None = None, window=(-10.0, 10.0), n: int = 20001) -> "OneDimProblem":
        a2 = a1 if a2 is None else a2
        return cls.sampled(lambda x: 1.0 / _vec(a1)(x), lambda x: 1.0 / _vec(a2)(x), window, n)

    def residual(self, p: OneDimPair) -> float:
        w = p.width
        return max(abs(float(self.b1(p.x1)) - w), abs(float(self.b2(p.x2)) - w))


def _solve_monotone(g: Callable[[float], float], guess: float, scale: float) -> float:
    """Root of an increasing function, bracketing outward from ``guess``."""
    step = max(scale, 1e-12)
    lo, hi = guess - step, guess + step
    for _ in range(200):
        glo, ghi = g(lo), g(hi)
        if glo <= 0 <= ghi:
            if glo == 0:
                return lo
            if ghi == 0:
                return hi
            return brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        if glo > 0:
            lo -= step
        if ghi < 0:
            hi += step
        step *= 2
    raise RootNotBracketed("implicit operator equation has no bracketed root")


def t1d_apply(p: OneDimPair, eps: float, prob: OneDimProblem) -> OneDimPair:
    if not 0 < eps < prob.eta0:
        raise ValueError(f"eps must lie in (0, {prob.eta0:g})")
    r1 = (1 - eps) * p.x1 + eps * p.x2
    r2 = eps * p.x1 + (1 - eps) * p.x2
    x1 = _solve_monotone(lambda x: x + eps * float(prob.b1(x)) - r1, r1 - eps * float(prob.b1(r1)), eps * prob.b_lo)
    x2 = _solve_monotone(lambda x: x - eps * float(prob.b2(x)) - r2, r2 + eps * float(prob.b2(r2)), eps * prob.b_lo)
    if not x1 < x2:
        raise RootNotBracketed("operator image is not an ordered pair")
    return OneDimPair(x1, x2)


@dataclass
class OneDimRun:
    pairs: list[OneDimPair]
    converged: bool

    @property
    def final(self) -> OneDimPair:
        return self.pairs[-1]


def t1d_iterate(start: OneDimPair, eps: float, prob: OneDimProblem, tol: float = 1e-10, max_iter: int = 1_000_000) -> OneDimRun:
    """Iterate T_eps until the implied residual max|x* - x| / eps drops below ``tol``."""
    pairs = [start]
    cur = start
    for _ in range(max_iter):
        nxt = t1d_apply(cur, eps, prob)
        pairs.append(nxt)
        done = max(abs(nxt.x1 - cur.x1), abs(nxt.x2 - cur.x2)) / eps < tol
        cur = nxt
        if done:
            return OneDimRun(pairs, True)
    return OneDimRun(pairs, False)


def t1d_fixed_point(start: OneDimPair, eps: float, prob: OneDimProblem, tol: float = 1e-10, max_iter: int = 1_000_000) -> OneDimPair:
    """Fixed point of T_eps reached from a weak lower or upper solution.

    The stopping rule bounds the equation residual directly:
    b1(x1*) - (x2 - x1) = (x1 - x1*) / eps, and likewise for x2.
    """
    run = t1d_iterate(start, eps, prob, tol, max_iter)
    if not run.converged:
        raise NoConvergence(f"1-D iteration did not settle in {max_iter} steps", last=run.final)
    return run.final


def _scan_f(prob: OneDimProblem, x1: np.ndarray):
    b1 = np.broadcast_to(_vec(prob.b1)(x1), x1.shape)
    x2 = x1 + b1
    return x2, np.broadcast_to(_vec(prob.b2)(x2), x1.shape) - b1


@dataclass(frozen=True)
class ScanSolution:
    pair: OneDimPair
    scan_index: int  # solutions with consecutive indices form a continuum


def solve1d_bruteforce(prob: OneDimProblem, window=(-2.0, 2.0), n: int = 4001, tol_scan: float = 1e-10) -> list[ScanSolution]:
    """All solutions with x1 in ``window``, by scanning and bracketing.

    Scan points where the defect b2(x1 + b1(x1)) - b1(x1) vanishes to
    ``tol_scan`` are accepted as they are (this is how solution continua show
    up); sign changes between scan points are refined with Brent's method.
    """
    x1 = np.linspace(window[0], window[1], n)
    x2, F = _scan_f(prob, x1)
    out: list[ScanSolution] = []
    zero = np.abs(F) <= tol_scan
    for k in np.nonzero(zero)[0]:
        out.append(ScanSolution(OneDimPair(float(x1[k]), float(x2[k])), int(k)))
    sc = np.nonzero((~zero[:-1]) & (~zero[1:]) & (np.sign(F[:-1]) != np.sign(F[1:])))[0]

    def defect(x):
        b = float(prob.b1(x))
        return float(prob.b2(x + b)) - b

    for k in sc:
        r = brentq(defect, x1[k], x1[k + 1], xtol=1e-14, maxiter=200)
        out.append(ScanSolution(OneDimPair(r, r + float(prob.b1(r))), int(k)))
    out.sort(key=lambda s: s.pair.x1)
    # dedupe
    keep: list[ScanSolution] = []
    for s in out:
        if keep and abs(s.pair.x1 - keep[-1].pair.x1) < 1e-12:
            continue
        keep.append(s)
    return keep


def nearest_solution_distance(p: OneDimPair, sols: list[ScanSolution]) -> float:
    """Max-norm distance from ``p`` to the scanned solution set.

    Neighbouring scan solutions (index difference 1) are treated as one
    continuum, so the distance to the segment between them counts.
    """
    if not sols:
        return math.inf
    pts = np.array([s.pair.as_tuple() for s in sols])
    q = np.array(p.as_tuple())
    best = float(np.min(np.max(np.abs(pts - q), axis=1)))
    idx = np.array([s.scan_index for s in sols])
    for k in np.nonzero(np.diff(idx) == 1)[0]:
        a, b = pts[k], pts[k + 1]
        d = b - a
        t = np.clip(np.dot(q - a, d) / max(np.dot(d, d), 1e-300), 0.0, 1.0)
        best = min(best, float(np.max(np.abs(a + t * d - q))))
    return best


# -- narrow-stream curve flow


def discrete_curvature(arc: PeriodicArc) -> np.ndarray:
    """Signed circumcircle curvature at each vertex (positive when bending to the left normal)."""
    v = arc.vertices
    P = arc.period
    nxt = np.roll(v, -1, axis=0)
    nxt[-1, 0] += P
    prv = np.roll(v, 1, axis=0)
    prv[0, 0] -= P
    a = v - prv
    b = nxt - v
    c = nxt - prv
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    den = np.hypot(*a.T) * np.hypot(*b.T) * np.hypot(*c.T)
    if np.any(den <= 0):
        raise CurveDegenerate("coincident vertices")
    return 2.0 * cross / den


def _left_normals(arc: PeriodicArc) -> np.ndarray:
    v = arc.vertices
    P = arc.period
    nxt = np.roll(v, -1, axis=0)
    nxt[-1, 0] += P
    prv = np.roll(v, 1, axis=0)
    prv[0, 0] -= P
    t = nxt - prv
    t = t / np.hypot(*t.T)[:, None]
    return np.column_stack([-t[:, 1], t[:, 0]])


def narrow_stream_velocity(arc: PeriodicArc, a: FlowSpeed) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(v, K, normals) with v = K - d_nu ln a along the left normal."""
    K = discrete_curvature(arc)
    nrm = _left_normals(arc)
    x, y = arc.vertices[:, 0], arc.vertices[:, 1]
    lx, ly = a.log_grad(x, y)
    return K - (lx * nrm[:, 0] + ly * nrm[:, 1]), K, nrm


def narrow_stream_relax(start: PeriodicArc, a: FlowSpeed, steps: int = 200_000, dt: float | None = None, tol_ns: float = 1e-6) -> PeriodicArc:
    """Explicit flow with normal speed K - a_nu / a until the speed is below ``tol_ns``.

    This is gradient descent for the weighted length integral of a ds, so
    valleys of a attract and ridges repel.  Vertices are redistributed by
    arc length after every step.
    """
    n = start.n
    arc = resample_fast(start, n)
    ds = float(np.min(np.hypot(*np.diff(arc.closed(), axis=0).T)))
    if dt is None:
        dt = 0.25 * ds * ds
    if dt > 0.5 * ds * ds:
        raise StepUnstable(f"dt={dt:g} exceeds the diffusion limit {0.5 * ds * ds:g}")
    for _ in range(steps):
        v, K, nrm = narrow_stream_velocity(arc, a)
        if float(np.max(np.abs(v))) < tol_ns:
            return arc
        if dt * float(np.max(np.abs(K))) > 0.5:
            raise StepUnstable(f"dt*max|K| = {dt * np.max(np.abs(K)):.3g} exceeds 0.5")
        pts = arc.vertices + dt * v[:, None] * nrm
        if not np.all(np.isfinite(pts)):
            raise CurveDegenerate("non-finite vertices")
        arc = resample_fast(PeriodicArc(pts, start.period, validate=False), n)
    raise NoConvergence(f"narrow-stream flow still moving after {steps} steps", last=arc)
