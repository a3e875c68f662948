"""Weighted distance fields, reachable super-level sets and the operators Psi and T.

For an arc Gamma and side i (1 below, 2 above) the weighted distance is
phi_i(p) = lambda_i * a_i(p) * dist(p, Gamma).  The operator Psi keeps the part
of {phi_i > eps} (open variant G) or {phi_i >= eps} (closed variant H) that is
connected to the far edge of the grid on side i and returns its boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from . import _contour
from .errors import EmptyRegion
from .field import FlowSpeed, FlowSpeedPair
from .geom import ArcPair, PeriodicArc, resample
from .potential import DIRS, Grid, GridSpec, arc_crossings, level_curve, solve_potential

TOL_H = 1e-9
PLUS, MINUS = "plus", "minus"
OPEN_G, CLOSED_H = "open-G", "closed-H"


class _ArcDistance:
    """Exact distance to a periodic polyline, with a KD-tree for candidate segments."""

    def __init__(self, arc: PeriodicArc, k: int = 8):
        self.arc = arc
        P = arc.period
        ks = list(arc.copies_needed(extra=1))
        # shift copies so that x in [0, P) is well covered
        x0 = arc.vertices[0, 0]
        s = -int(np.floor(x0 / P))
        ks = [k_ + s for k_ in ks] + [max(ks) + s + 1]
        c = arc.vertices
        V = np.vstack([c + (kk * P, 0.0) for kk in ks] + [c[:1] + ((max(ks) + 1) * P, 0.0)])
        self.V = V
        self.A = V[:-1]
        self.B = V[1:]
        self.tree = cKDTree(V)
        self.k = min(k, len(V))
        self.seg_max = float(np.max(np.hypot(*(self.B - self.A).T)))
        self.P = P

    def _fold(self, pts):
        pts = np.asarray(pts, dtype=float)
        x = np.mod(pts[..., 0], self.P)
        return np.stack([x, pts[..., 1]], axis=-1)

    def vertex_distance(self, pts):
        d, _ = self.tree.query(self._fold(pts), k=1)
        return d

    def candidates(self, pts):
        _, iv = self.tree.query(self._fold(pts), k=self.k)
        iv = np.atleast_2d(iv)
        segs = np.concatenate([iv - 1, iv], axis=1)
        return np.clip(segs, 0, len(self.A) - 1)

    def distance(self, pts, cand=None):
        q = self._fold(pts)
        if cand is None:
            cand = self.candidates(q)
        a = self.A[cand]
        b = self.B[cand]
        px = q[:, 0:1]
        py = q[:, 1:2]
        dx = b[..., 0] - a[..., 0]
        dy = b[..., 1] - a[..., 1]
        L2 = dx * dx + dy * dy
        t = np.clip(((px - a[..., 0]) * dx + (py - a[..., 1]) * dy) / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)
        ex = a[..., 0] + t * dx - px
        ey = a[..., 1] + t * dy - py
        return np.sqrt((ex * ex + ey * ey).min(axis=1))


@dataclass
class WeightedDistanceField:
    """phi on grid nodes; NaN where the node is not on the requested side.

    Nodes far from the arc (phi certainly above ``band``) hold a lower bound
    instead of the exact value; ``exact`` marks the exactly evaluated nodes.
    """

    grid: Grid
    side: int
    phi: np.ndarray
    on_side: np.ndarray
    exact: np.ndarray
    arc: PeriodicArc
    a: FlowSpeed
    lam: float
    dist: _ArcDistance


def _grid_of(grid, arc) -> Grid:
    if isinstance(grid, Grid):
        return grid
    if grid.ylo is None:
        raise ValueError("weighted_distance needs a grid with a fixed window")
    return Grid.from_spec(grid, arc.period)


def weighted_distance(a: FlowSpeed, lam: float, arc: PeriodicArc, side: int, grid, band: float | None = None) -> WeightedDistanceField:
    """phi_i = lam * a * dist(., arc) on the side-i complement of the arc.

    With ``band`` set, nodes whose distance is provably larger than ``band``
    keep a lower bound on phi (cheap); all others are exact.
    """
    g = _grid_of(grid, arc)
    X, Y = g.mesh()
    cr = arc_crossings(arc, g)
    # strictly on the side; nodes on the arc belong to neither side
    on_side = cr.below if side == 1 else ~cr.below
    on_arc = np.zeros_like(on_side)
    for d in DIRS:
        on_arc |= cr.dist[d] == 0
    on_side &= ~on_arc
    D = _ArcDistance(arc)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    ylo, yhi = arc.vertices[:, 1].min(), arc.vertices[:, 1].max()
    # vertical distance to the arc's y-range is a valid lower bound
    lower = np.maximum(np.maximum(ylo - Y, Y - yhi), 0.0).ravel()
    if band is None:
        need = np.ones(len(pts), dtype=bool)
    else:
        near = lower <= band
        dv = D.vertex_distance(pts[near])
        lower[near] = np.maximum(dv - 0.5 * D.seg_max, 0.0)
        need = lower <= band
    dist = lower.copy()
    if np.any(need):
        dist[need] = D.distance(pts[need])
    dist = dist.reshape(X.shape)
    phi = lam * a.eval(X, Y) * dist
    phi = np.where(on_side, phi, np.nan)
    phi[on_arc] = 0.0
    return WeightedDistanceField(g, side, phi, on_side, need.reshape(X.shape), arc, a, lam, D)


@dataclass
class ReachableRegion:
    mask: np.ndarray
    side: int
    eps: float
    variant: str


def _periodic_label(mask: np.ndarray):
    lab, n = ndimage.label(mask)
    if n == 0:
        return lab, n
    # merge labels across the x seam
    parent = np.arange(n + 1)

    def find(u):
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    left, right = lab[:, 0], lab[:, -1]
    for l1, l2 in zip(left.tolist(), right.tolist()):
        if l1 and l2:
            r1, r2 = find(l1), find(l2)
            if r1 != r2:
                parent[max(r1, r2)] = min(r1, r2)
    roots = np.array([find(u) for u in range(n + 1)])
    return roots[lab], n


def reachable_superlevel(phi: WeightedDistanceField, eps: float, variant: str = OPEN_G) -> ReachableRegion:
    if variant == OPEN_G:
        thr = phi.on_side & (np.nan_to_num(phi.phi, nan=-1.0) > eps)
    elif variant == CLOSED_H:
        thr = phi.on_side & (np.nan_to_num(phi.phi, nan=-1.0) >= eps - TOL_H)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    lab, n = _periodic_label(thr)
    far = lab[0] if phi.side == 1 else lab[-1]
    keep = np.unique(far[far > 0])
    if len(keep) == 0:
        raise EmptyRegion(f"no node on the far edge of side {phi.side} exceeds eps={eps:g}; enlarge the grid window")
    mask = np.isin(lab, keep)
    return ReachableRegion(mask, phi.side, eps, variant)


def _boundary_arc(wd: WeightedDistanceField, region: ReachableRegion, n_out: int | None) -> PeriodicArc:
    g = wd.grid
    ny, nx = g.ny, g.nx
    pos = region.mask
    thr = region.eps - (TOL_H if region.variant == CLOSED_H else 0.0)
    D = wd.dist
    arc = wd.arc
    cr = arc_crossings(arc, g)
    (hj, hi), (vj, vi) = _contour.sign_change_edges(pos)
    points = {}

    def solve(j, i, d, ids):
        dj, di = DIRS[d]
        j2, i2 = j + dj, (i + di) % nx
        inA = pos[j, i]
        ja = np.where(inA, j, j2)
        ia = np.where(inA, i, i2)
        sgn = np.where(inA, 1.0, -1.0)
        hstep = g.step(d)
        # direction from the masked node towards the other one
        ddx = sgn * di * g.hx
        ddy = sgn * dj * g.hy
        # first arc crossing on the way: beyond it phi is not defined on this side
        dfw = np.where(inA, cr.dist[d][j, i], cr.dist[_back(d)][j2, i2])
        thi = np.minimum(np.where(np.isfinite(dfw), dfw / hstep, 1.0), 1.0)
        x0 = g.x[ia]
        y0 = g.y[ja]
        mid = np.column_stack([x0 + 0.5 * thi * ddx, y0 + 0.5 * thi * ddy])
        cand = D.candidates(mid)

        def F(t):
            p = np.column_stack([x0 + t * ddx, y0 + t * ddy])
            return wd.lam * wd.a.eval(p[:, 0], p[:, 1]) * D.distance(p, cand) - thr

        lo = np.zeros(len(j))
        hi_ = thi.copy()
        flo = F(lo)
        fhi = F(hi_)
        # crossing the arc: phi reaches 0 there; otherwise the far node is below threshold
        fhi = np.where(thi < 1.0, -thr, fhi)
        # Illinois regula falsi
        side = np.zeros(len(j))
        best = np.where(np.abs(flo) < np.abs(fhi), lo, hi_)
        fbest = np.minimum(np.abs(flo), np.abs(fhi))
        for _ in range(60):
            t = (lo * fhi - hi_ * flo) / (fhi - flo)
            t = np.where(np.isfinite(t), np.clip(t, lo, hi_), 0.5 * (lo + hi_))
            ft = F(t)
            imp = np.abs(ft) < fbest
            best = np.where(imp, t, best)
            fbest = np.where(imp, np.abs(ft), fbest)
            left = np.sign(ft) == np.sign(flo)
            lo = np.where(left, t, lo)
            hi_ = np.where(left, hi_, t)
            flo_new = np.where(left, ft, flo)
            fhi_new = np.where(left, fhi, ft)
            # Illinois: halve the stagnant end
            fhi_new = np.where(left & (side == 1), 0.5 * fhi_new, fhi_new)
            flo_new = np.where(~left & (side == -1), 0.5 * flo_new, flo_new)
            side = np.where(left, 1, -1)
            flo, fhi = flo_new, fhi_new
            if np.all((hi_ - lo < 1e-13) | (fbest < 1e-14 * max(thr, 1e-300))):
                break
        t = best
        out = np.column_stack([x0 + t * ddx, y0 + t * ddy])
        for e, p in zip(ids.tolist(), out):
            points[e] = p

    if len(hj):
        solve(hj, hi, "E", hj * nx + hi)
    if len(vj):
        solve(vj, vi, "N", ny * nx + vj * nx + vi)

    def center_pos(j, i):
        c = np.column_stack([g.x[i] + 0.5 * g.hx, g.y[j] + 0.5 * g.hy])
        val = wd.lam * wd.a.eval(c[:, 0], c[:, 1]) * D.distance(c)
        return val > thr

    links = _contour.cell_links(pos, center_pos)
    comps = _contour.stitch(links, points, g.period, 1e-9 * g.h)
    out = _contour.single_arc(comps, g.period)
    if n_out:
        out = resample(out, n_out)
    return out


def _back(d):
    return {"N": "S", "S": "N", "E": "W", "W": "E"}[d]


def variant_for(side: int, sign: str) -> str:
    """Sign convention: Psi+ uses H below and G above, Psi- the reverse."""
    if sign == PLUS:
        return CLOSED_H if side == 1 else OPEN_G
    if sign == MINUS:
        return OPEN_G if side == 1 else CLOSED_H
    raise ValueError(f"sign must be 'plus' or 'minus', got {sign!r}")


def psi(arc: PeriodicArc, eps: float, side: int, sign: str, a: FlowSpeed, lam: float, grid, n_out: int | None = None) -> PeriodicArc:
    """Boundary of the reachable super-level set of phi_side at level eps."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    g = _grid_of(grid, arc)
    X, Y = g.mesh()
    amin = float(np.min(a.eval(X, Y)))
    band = eps / (lam * amin) + 2 * g.h
    wd = weighted_distance(a, lam, arc, side, g, band=band)
    region = reachable_superlevel(wd, eps, variant_for(side, sign))
    return _boundary_arc(wd, region, g.nx if n_out is None else n_out)


def _grid_and_tol(pair: ArcPair, grid):
    if isinstance(grid, GridSpec):
        spec = grid if grid.ylo is not None else grid.window_for(pair)
        return Grid.from_spec(spec, pair.period), spec.tol_pde
    return grid, 1e-8


def apply_T_with_potential(pair: ArcPair, eps: float, sign: str, fields: FlowSpeedPair, grid, n_out: int | None = None):
    """Like :func:`apply_T` but also returns the potential solved on ``pair``."""
    g, tol = _grid_and_tol(pair, grid)
    U = solve_potential(pair, GridSpec(g.nx, g.ny, tol_pde=tol), grid=g)
    phi1 = level_curve(U, eps)
    phi2 = level_curve(U, 1.0 - eps)
    n1 = n_out or pair.gamma1.n
    n2 = n_out or pair.gamma2.n
    out1 = psi(phi1, eps, 1, sign, fields.a1, fields.lambda1, g, n1)
    out2 = psi(phi2, eps, 2, sign, fields.a2, fields.lambda2, g, n2)
    return ArcPair(out1, out2), U


def apply_T(pair: ArcPair, eps: float, sign: str, fields: FlowSpeedPair, grid, n_out: int | None = None) -> ArcPair:
    """T_eps(pair) = Psi(Phi(pair)) with Phi = ({U = eps}, {U = 1 - eps}).

    ``grid`` may be a GridSpec (window fitted to ``pair`` unless fixed) or a Grid.
    """
    return apply_T_with_potential(pair, eps, sign, fields, grid, n_out)[0]
