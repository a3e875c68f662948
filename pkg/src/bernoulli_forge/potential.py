"""Capacitary potential on a periodic strip.

The strip between two ordered arcs is discretised on a uniform Cartesian grid,
periodic in x.  Nodes next to a boundary use Shortley-Weller stencils: the
neighbour across the curve is replaced by the exact crossing point of the grid
line with the polyline.  The sparse system is solved directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _contour
from .errors import DegenerateNormal, DisconnectedLevelSet, GapUnresolved, NoConvergence, SolveFailed
from .geom import ArcPair, PeriodicArc

BELOW, INSIDE, ABOVE, ON1, ON2 = 0, 1, 2, 3, 4
THETA_TOL = 1e-8

# direction table: (dj, di)
DIRS = {"N": (1, 0), "S": (-1, 0), "E": (0, 1), "W": (0, -1)}
BACK = {"N": "S", "S": "N", "E": "W", "W": "E"}


@dataclass(frozen=True)
class GridSpec:
    nx: int = 256
    ny: int = 256
    pad: float = 0.5
    tol_pde: float = 1e-8
    max_sweeps: int = 10000
    ylo: float | None = None
    yhi: float | None = None

    def __post_init__(self):
        if self.nx < 32 or self.ny < 32:
            raise ValueError("grid needs nx, ny >= 32")
        if not (0 < self.tol_pde <= 1e-3):
            raise ValueError("tol_pde must lie in (0, 1e-3]")
        if self.pad < 0:
            raise ValueError("pad must be non-negative")

    def scaled(self, k: int) -> "GridSpec":
        return replace(self, nx=self.nx * k, ny=self.ny * k)

    def with_window(self, ylo: float, yhi: float) -> "GridSpec":
        return replace(self, ylo=float(ylo), yhi=float(yhi))

    def window_for(self, *pairs: ArcPair) -> "GridSpec":
        """Fix the vertical window so that it covers all given pairs plus pad."""
        lo = min(p.y_range()[0] for p in pairs) - self.pad
        hi = max(p.y_range()[1] for p in pairs) + self.pad
        return self.with_window(lo, hi)


class Grid:
    """Node coordinates of an x-periodic grid: x_i = i*hx, y_j = ylo + j*hy."""

    def __init__(self, period: float, nx: int, ny: int, ylo: float, yhi: float):
        self.period = float(period)
        self.nx, self.ny = int(nx), int(ny)
        self.ylo, self.yhi = float(ylo), float(yhi)
        self.hx = self.period / self.nx
        self.hy = (self.yhi - self.ylo) / (self.ny - 1)
        self.x = np.arange(self.nx) * self.hx
        self.y = self.ylo + np.arange(self.ny) * self.hy

    @classmethod
    def from_spec(cls, spec: GridSpec, period: float, pair: ArcPair | None = None) -> "Grid":
        if spec.ylo is None or spec.yhi is None:
            if pair is None:
                raise ValueError("grid window undetermined")
            spec = spec.window_for(pair)
        return cls(period, spec.nx, spec.ny, spec.ylo, spec.yhi)

    @property
    def h(self) -> float:
        return max(self.hx, self.hy)

    def step(self, d: str) -> float:
        return self.hy if d in "NS" else self.hx

    def mesh(self):
        return np.meshgrid(self.x, self.y)

    def key(self):
        return (self.period, self.nx, self.ny, self.ylo, self.yhi)


def h_grid(spec: GridSpec, period: float, pair: ArcPair | None = None) -> float:
    return Grid.from_spec(spec, period, pair).h


# -- crossings of an arc with the grid lines


@dataclass
class Crossings:
    """Intersections of one arc with all grid lines.

    Per direction d the arrays ``idx[d]`` (crossing index or -1) and
    ``dist[d]`` (distance from the node along d, inf if none on that edge)
    describe the nearest crossing on the edge leaving each node.
    """

    x: np.ndarray
    y: np.ndarray
    tx: np.ndarray
    ty: np.ndarray
    param: np.ndarray
    below: np.ndarray  # node strictly below the arc (ray-casting parity)
    idx: dict
    dist: dict


def arc_crossings(arc: PeriodicArc, grid: Grid) -> Crossings:
    P, nx, ny = grid.period, grid.nx, grid.ny
    v = arc.vertices
    n = len(v)
    xmin = v[:, 0].min()
    xmax = v[:, 0].max() + P
    kmin = math.floor(-xmax / P) - 1
    kmax = math.ceil((P - xmin) / P) + 1
    ks = np.arange(kmin, kmax + 1)
    # consecutive copies share endpoints bit for bit, so no seam crossing is lost to rounding
    kk_ = np.append(ks, ks[-1] + 1)
    ext = (v[None, :, :] + np.stack([kk_ * P, np.zeros_like(kk_, dtype=float)], axis=1)[:, None, :]).reshape(-1, 2)
    A = ext[: len(ks) * n]
    B = ext[1 : len(ks) * n + 1]
    segparam = (ks[:, None] * n + np.arange(n)[None, :]).reshape(-1).astype(float)
    T = B - A

    xs_all, ys_all, tx_all, ty_all, pr_all = [], [], [], [], []

    # vertical lines x = i*hx
    lo = np.minimum(A[:, 0], B[:, 0])
    hi = np.maximum(A[:, 0], B[:, 0])
    i0 = np.maximum(np.ceil(lo / grid.hx).astype(int) - 1, 0)
    i1 = np.minimum(np.ceil(hi / grid.hx).astype(int) + 1, nx - 1)
    cnt = np.maximum(i1 - i0 + 1, 0)
    seg = np.repeat(np.arange(len(A)), cnt)
    off = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    col = np.repeat(i0, cnt) + off
    xc = col * grid.hx
    ok = (lo[seg] <= xc) & (xc < hi[seg])
    seg, col, xc = seg[ok], col[ok], xc[ok]
    t = (xc - A[seg, 0]) / T[seg, 0]
    yc = A[seg, 1] + t * T[seg, 1]
    vcol, vy, vseg, vt = col, yc, seg, t

    # parity: crossings strictly above each node
    kk = np.searchsorted(grid.y, vy, side="left")  # nodes j < kk have y_j < yc
    H = np.zeros((nx, ny + 1))
    np.add.at(H, (vcol, kk), 1)
    above = np.cumsum(H[:, ::-1], axis=1)[:, ::-1][:, 1:]  # count of crossings with y > y_j
    below = (above.T.astype(int) % 2) == 1

    # horizontal lines y = y_j
    lo = np.minimum(A[:, 1], B[:, 1])
    hi = np.maximum(A[:, 1], B[:, 1])
    j0 = np.maximum(np.ceil((lo - grid.ylo) / grid.hy).astype(int) - 1, 0)
    j1 = np.minimum(np.ceil((hi - grid.ylo) / grid.hy).astype(int) + 1, ny - 1)
    cnt = np.maximum(j1 - j0 + 1, 0)
    hseg = np.repeat(np.arange(len(A)), cnt)
    off = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    row = np.repeat(j0, cnt) + off
    yr = grid.y[row] if len(row) else np.empty(0)
    ok = (lo[hseg] <= yr) & (yr < hi[hseg])
    hseg, row, yr = hseg[ok], row[ok], yr[ok]
    ht = (yr - A[hseg, 1]) / T[hseg, 1]
    hx_ = A[hseg, 0] + ht * T[hseg, 0]
    ok = (hx_ >= 0) & (hx_ < P)
    hseg, row, yr, ht, hx_ = hseg[ok], row[ok], yr[ok], ht[ok], hx_[ok]

    # collect crossing records: vertical-line ones first
    inwin = (vy >= grid.y[0]) & (vy <= grid.y[-1])
    vsel = np.nonzero(inwin)[0]
    nv = len(vsel)
    X = np.concatenate([vcol[vsel] * grid.hx, hx_])
    Y = np.concatenate([vy[vsel], yr])
    segs = np.concatenate([vseg[vsel], hseg])
    ts = np.concatenate([vt[vsel], ht])
    # tangents blend the vertex tangents along each segment, so a crossing at
    # a vertex does not depend on which of its two segments reported it
    tv = np.roll(v, -1, axis=0) - np.roll(v, 1, axis=0)
    tv[0, 0] += P
    tv[-1, 0] += P
    tv /= np.hypot(tv[:, 0], tv[:, 1])[:, None]
    s0 = segs % n
    s1 = (s0 + 1) % n
    tx = (1 - ts) * tv[s0, 0] + ts * tv[s1, 0]
    ty = (1 - ts) * tv[s0, 1] + ts * tv[s1, 1]
    nrm = np.hypot(tx, ty)
    param = segparam[segs] + ts

    idx = {d: np.full((ny, nx), -1, dtype=np.int64) for d in DIRS}
    dist = {d: np.full((ny, nx), np.inf) for d in DIRS}

    def put(d, jj, ii, dd, cid):
        if len(jj) == 0:
            return
        order = np.lexsort((dd, ii, jj))
        jj, ii, dd, cid = jj[order], ii[order], dd[order], cid[order]
        flat = jj * nx + ii
        first = np.ones(len(flat), dtype=bool)
        first[1:] = flat[1:] != flat[:-1]
        jj, ii, dd, cid = jj[first], ii[first], dd[first], cid[first]
        cur = dist[d][jj, ii]
        better = dd < cur
        dist[d][jj[better], ii[better]] = dd[better]
        idx[d][jj[better], ii[better]] = cid[better]

    # vertical-line crossings: edge (k-1, k) in column col
    cid = np.arange(nv)
    k = np.searchsorted(grid.y, Y[:nv], side="left")
    colv = vcol[vsel]
    m = k >= 1
    put("N", k[m] - 1, colv[m], Y[:nv][m] - grid.y[k[m] - 1], cid[m])
    m = k <= ny - 1
    put("S", k[m], colv[m], grid.y[k[m]] - Y[:nv][m], cid[m])
    # a crossing exactly on a node also ends the edge above that node
    m = (k <= ny - 2) & (grid.y[np.minimum(k, ny - 1)] == Y[:nv])
    put("S", k[m] + 1, colv[m], grid.y[k[m] + 1] - Y[:nv][m], cid[m])
    put("N", k[m], colv[m], np.zeros(int(m.sum())), cid[m])

    # horizontal-line crossings
    cid = nv + np.arange(len(hx_))
    k = np.searchsorted(grid.x, hx_, side="left")
    xr = k * grid.hx
    put("W", row, k % nx, xr - hx_, cid)
    put("E", row, (k - 1) % nx, hx_ - (k - 1) * grid.hx, cid)
    m = xr == hx_
    put("W", row[m], (k[m] + 1) % nx, (k[m] + 1) * grid.hx - hx_[m], cid[m])
    put("E", row[m], k[m] % nx, np.zeros(int(m.sum())), cid[m])

    return Crossings(X, Y, tx / nrm, ty / nrm, param, below, idx, dist)


# -- cut grid for a pair of arcs


class CutGrid:
    """Node classification and boundary crossings for the strip between two arcs."""

    def __init__(self, lower: PeriodicArc, upper: PeriodicArc, grid: Grid):
        self.grid = grid
        self.lower, self.upper = lower, upper
        c1 = arc_crossings(lower, grid)
        c2 = arc_crossings(upper, grid)
        self.cross = (c1, c2)
        ny, nx = grid.ny, grid.nx
        # nearest crossing of either curve per node and direction
        self.dist, self.curve, self.cidx = {}, {}, {}
        for d in DIRS:
            d1, d2 = c1.dist[d], c2.dist[d]
            use2 = d2 < d1
            self.dist[d] = np.where(use2, d2, d1)
            self.curve[d] = np.where(use2, 2, 1)
            self.cidx[d] = np.where(use2, c2.idx[d], c1.idx[d])
        cls = np.full((ny, nx), INSIDE, dtype=np.int8)
        cls[c1.below] = BELOW
        cls[~c2.below] = ABOVE
        # nodes lying on a curve
        on = np.zeros((ny, nx), dtype=bool)
        oncurve = np.zeros((ny, nx), dtype=np.int8)
        oncid = np.full((ny, nx), -1, dtype=np.int64)
        for d in DIRS:
            hit = self.dist[d] <= THETA_TOL * grid.step(d)
            newhit = hit & ~on
            oncurve[newhit] = self.curve[d][newhit]
            oncid[newhit] = self.cidx[d][newhit]
            on |= hit
        cls[on & (oncurve == 1)] = ON1
        cls[on & (oncurve == 2)] = ON2
        # a node snapped onto a curve is a crossing one step away for its
        # inside neighbours; without this they would see no boundary at all
        for d, (dj, di) in DIRS.items():
            h = grid.step(d)
            nb_on = np.zeros((ny, nx), dtype=bool)
            src = (slice(max(dj, 0), ny + min(dj, 0)), slice(None))
            dst = (slice(max(-dj, 0), ny + min(-dj, 0)), slice(None))
            nb_on[dst] = np.roll(on, -di, axis=1)[src]
            fix = nb_on & (cls == INSIDE) & (self.dist[d] > h)
            if np.any(fix):
                jj, ii = np.nonzero(fix)
                jn, inn = jj + dj, (ii + di) % nx
                self.dist[d][jj, ii] = h
                self.curve[d][jj, ii] = oncurve[jn, inn]
                self.cidx[d][jj, ii] = oncid[jn, inn]
        self.cls = cls

    @property
    def inside(self):
        return self.cls == INSIDE

    @property
    def known(self):
        return (self.cls == INSIDE) | (self.cls == ON1) | (self.cls == ON2)

    def crossing_point(self, curve: int, cid):
        c = self.cross[curve - 1]
        return c.x[cid], c.y[cid]

    def min_vertical_gap(self) -> float:
        """Smallest vertical distance between the curves over grid columns."""
        c1, c2 = self.cross
        nx = self.grid.nx
        top1 = np.full(nx, -np.inf)
        bot2 = np.full(nx, np.inf)
        # vertical-line crossings are those whose x is a grid abscissa
        for c, agg, arr in ((c1, np.maximum, top1), (c2, np.minimum, bot2)):
            col = np.round(c.x / self.grid.hx).astype(int)
            isv = np.isclose(c.x, col * self.grid.hx, rtol=0, atol=1e-12 * self.grid.period)
            agg.at(arr, col[isv] % nx, c.y[isv])
        return float(np.min(bot2 - top1))


Value = float | Callable[[np.ndarray, np.ndarray], np.ndarray]


def _bvalue(v: Value, x, y):
    if callable(v):
        return np.asarray(v(x, y), dtype=float)
    return np.full(np.shape(x), float(v))


@dataclass
class PotentialField:
    """Solution of a Dirichlet problem on the cut grid.

    ``U`` has shape (ny, nx); NaN at exterior nodes.  ``values`` gives the
    boundary data of the two curves (constants or callables).
    """

    cut: CutGrid
    U: np.ndarray
    values: tuple
    residual: float
    converged: bool = True

    @property
    def grid(self) -> Grid:
        return self.cut.grid

    @property
    def pair(self) -> ArcPair:
        return ArcPair.unchecked(self.cut.lower, self.cut.upper)

    def periodic_values(self) -> np.ndarray:
        """U with column 0 repeated as column nx."""
        return np.concatenate([self.U, self.U[:, :1]], axis=1)

    def side_value(self, curve: int, x=None, y=None):
        v = self.values[curve - 1]
        if x is None:
            return v if not callable(v) else np.nan
        return _bvalue(v, x, y)

    def dump_csv(self, path) -> None:
        X, Y = self.grid.mesh()
        m = self.cut.inside
        with open(path, "w") as fh:
            fh.write("x,y,U\n")
            for x, y, u in zip(X[m], Y[m], self.U[m]):
                fh.write(f"{float(x)!r},{float(y)!r},{float(u)!r}\n")


def solve_dirichlet(
    lower: PeriodicArc,
    upper: PeriodicArc,
    grid: Grid,
    v_lower: Value = 0.0,
    v_upper: Value = 1.0,
    rhs: Callable | None = None,
    tol: float = 1e-8,
    min_cells: int = 8,
    cut: CutGrid | None = None,
) -> PotentialField:
    """Solve Delta u = rhs between ``lower`` and ``upper`` with Dirichlet data."""
    if cut is None:
        cut = CutGrid(lower, upper, grid)
    gap = cut.min_vertical_gap()
    if gap < min_cells * grid.hy:
        raise GapUnresolved(f"vertical gap {gap:.4g} spans fewer than {min_cells} cells (hy={grid.hy:.4g})")
    ny, nx = grid.ny, grid.nx
    cls = cut.cls
    inside = cls == INSIDE
    if np.any(inside[0]) or np.any(inside[-1]):
        raise SolveFailed("grid window does not contain the strip")
    nidx = np.full((ny, nx), -1, dtype=np.int64)
    # column-major numbering keeps the periodic bandwidth small for the ordering
    ii, jj = np.nonzero(inside.T)
    N = len(jj)
    nidx[jj, ii] = np.arange(N)
    vals = (v_lower, v_upper)

    U = np.full((ny, nx), np.nan)
    for curve, code in ((1, ON1), (2, ON2)):
        m = cls == code
        if np.any(m):
            X, Y = grid.x[np.nonzero(m)[1]], grid.y[np.nonzero(m)[0]]
            U[m] = _bvalue(vals[curve - 1], X, Y)

    # effective arm lengths and boundary values
    arm = {}
    bval = {}
    nbr = {}
    for d, (dj, di) in DIRS.items():
        h = grid.step(d)
        dd = cut.dist[d][jj, ii]
        cut_here = dd <= h
        length = np.where(cut_here, dd, h)
        bv = np.zeros(N)
        if np.any(cut_here):
            k = np.nonzero(cut_here)[0]
            for curve in (1, 2):
                kc = k[cut.curve[d][jj[k], ii[k]] == curve]
                if len(kc):
                    px, py = cut.crossing_point(curve, cut.cidx[d][jj[kc], ii[kc]])
                    bv[kc] = _bvalue(vals[curve - 1], px, py)
        nj, ni = jj + dj, (ii + di) % nx
        nb = np.where(cut_here, -1, nidx[np.clip(nj, 0, ny - 1), ni])
        # inconsistent neighbour (exterior without a detected crossing)
        bad = (~cut_here) & (nb < 0)
        if np.any(bad):
            kb = np.nonzero(bad)[0]
            ncls = cls[np.clip(nj[kb], 0, ny - 1), ni[kb]]
            for code, curve in ((BELOW, 1), (ON1, 1), (ABOVE, 2), (ON2, 2)):
                kc = kb[ncls == code]
                if len(kc):
                    bv[kc] = _bvalue(vals[curve - 1], grid.x[ni[kc]], grid.y[np.clip(nj[kc], 0, ny - 1)])
            cut_here = cut_here | bad
        arm[d], bval[d], nbr[d] = length, bv, np.where(cut_here, -1, nb)

    rows, cols, data = [], [], []
    b = np.zeros(N)
    diag = np.zeros(N)
    for d, opp in (("E", "W"), ("W", "E"), ("N", "S"), ("S", "N")):
        c = 2.0 / (arm[d] * (arm[d] + arm[opp]))
        diag -= c
        inn = nbr[d] >= 0
        rows.append(np.nonzero(inn)[0])
        cols.append(nbr[d][inn])
        data.append(c[inn])
        b -= np.where(inn, 0.0, c * bval[d])
    if rhs is not None:
        b += rhs(grid.x[ii], grid.y[jj])
    rows.append(np.arange(N))
    cols.append(np.arange(N))
    data.append(diag)
    A = sp.csc_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    # the matrix is an M-matrix, so no pivoting is needed
    lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options={"SymmetricMode": True})
    u = lu.solve(b)
    r = A @ u - b
    res = float(np.max(np.abs(r) / np.abs(diag))) if N else 0.0
    scale = max(1.0, float(np.max(np.abs(u)))) if N else 1.0
    if res > tol * scale:
        u = u + lu.solve(-r)
        r = A @ u - b
        res = float(np.max(np.abs(r) / np.abs(diag)))
    U[jj, ii] = u
    field = PotentialField(cut, U, vals, res, res <= tol * scale)
    if not field.converged:
        raise NoConvergence(f"linear residual {res:.3g} above tolerance {tol:.3g}", last=field)
    return field


def solve_potential(pair: ArcPair, spec: GridSpec, grid: Grid | None = None) -> PotentialField:
    """Capacitary potential: U = 0 on gamma1, U = 1 on gamma2, harmonic between."""
    if grid is None:
        grid = Grid.from_spec(spec, pair.period, pair)
    return solve_dirichlet(pair.gamma1, pair.gamma2, grid, 0.0, 1.0, tol=spec.tol_pde)


# -- one-dimensional interpolation along grid lines


def _barycentric(ts, vs, valid, t):
    """Evaluate the interpolating polynomial through the valid samples at t (row-wise)."""
    m = valid.astype(float)
    K = ts.shape[1]
    w = np.ones_like(ts)
    for j in range(K):
        for k in range(K):
            if j != k:
                diff = ts[:, j] - ts[:, k]
                w[:, j] *= np.where(valid[:, k], diff, 1.0)
    w = np.where(valid, 1.0 / np.where(w == 0, 1.0, w), 0.0)
    dt = t[:, None] - ts
    exact = (np.abs(dt) < 1e-15) & valid
    dt = np.where(exact | ~valid, 1.0, dt)
    num = np.sum(m * w * vs / dt, axis=1)
    den = np.sum(m * w / dt, axis=1)
    out = num / den
    if np.any(exact):
        r, c = np.nonzero(exact)
        out[r] = vs[r, c]
    return out


def _edge_roots(field: PotentialField, vals: np.ndarray, known: np.ndarray, alpha: float, jA, iA, d):
    """Root of U = alpha along edges leaving known nodes (jA, iA) in direction d.

    Returns the fractional distance t in units of the grid step.
    """
    cut, grid = field.cut, field.grid
    ny, nx = grid.ny, grid.nx
    dj, di = DIRS[d]
    h = grid.step(d)
    m = len(jA)
    ts = np.zeros((m, 4))
    vs = np.zeros((m, 4))
    valid = np.zeros((m, 4), dtype=bool)
    # A - 1
    jb, ib = jA - dj, (iA - di) % nx
    inr = (jb >= 0) & (jb < ny)
    jbc = np.clip(jb, 0, ny - 1)
    ok = inr & known[jbc, ib] & (cut.dist[BACK[d]][jA, iA] > h)
    ts[:, 0], vs[:, 0], valid[:, 0] = -1.0, np.where(ok, vals[jbc, ib], 0.0), ok
    ts[:, 1], vs[:, 1], valid[:, 1] = 0.0, vals[jA, iA], True
    # crossing or B
    dd = cut.dist[d][jA, iA]
    cutting = dd <= h
    jB, iB = jA + dj, (iA + di) % nx
    jBc = np.clip(jB, 0, ny - 1)
    cval = np.zeros(m)
    if np.any(cutting):
        k = np.nonzero(cutting)[0]
        for curve in (1, 2):
            kc = k[cut.curve[d][jA[k], iA[k]] == curve]
            if len(kc):
                px, py = cut.crossing_point(curve, cut.cidx[d][jA[kc], iA[kc]])
                cval[kc] = field.side_value(curve, px, py)
    ts[:, 2] = np.where(cutting, dd / h, 1.0)
    vs[:, 2] = np.where(cutting, cval, vals[jBc, iB])
    valid[:, 2] = True
    # B + 1
    jC, iC = jB + dj, (iB + di) % nx
    inr = (jC >= 0) & (jC < ny)
    jCc = np.clip(jC, 0, ny - 1)
    ok = (~cutting) & inr & known[jCc, iC] & (cut.dist[d][jBc, iB] > h)
    ts[:, 3], vs[:, 3], valid[:, 3] = 2.0, np.where(ok, vals[jCc, iC], 0.0), ok

    f0 = vs[:, 1] - alpha
    lo = np.zeros(m)
    hi = ts[:, 2].copy()
    flo = f0
    for _ in range(55):
        mid = 0.5 * (lo + hi)
        fm = _barycentric(ts, vs, valid, mid) - alpha
        same = np.sign(fm) == np.sign(flo)
        lo = np.where(same, mid, lo)
        flo = np.where(same, fm, flo)
        hi = np.where(same, hi, mid)
    return 0.5 * (lo + hi)


def level_curve(field: PotentialField, alpha: float) -> PeriodicArc:
    """The curve {U = alpha}, stitched into one periodic arc."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    cut, grid = field.cut, field.grid
    known = cut.known
    vals = field.U.copy()
    lowv = field.values[0] if not callable(field.values[0]) else 0.0
    upv = field.values[1] if not callable(field.values[1]) else 1.0
    vals[cut.cls == BELOW] = lowv
    vals[cut.cls == ABOVE] = upv
    pos = vals > alpha
    (hj, hi_), (vj, vi) = _contour.sign_change_edges(pos)
    nx, ny = grid.nx, grid.ny
    points = {}

    def solve_edges(j, i, dir_fwd, ids):
        # choose the known endpoint as origin
        dj, di = DIRS[dir_fwd]
        j2, i2 = j + dj, (i + di) % nx
        a_known = known[j, i]
        out = np.empty((len(j), 2))
        for flag, (ja, ia, d) in ((True, (j, i, dir_fwd)), (False, (j2, i2, BACK[dir_fwd]))):
            sel = a_known if flag else ~a_known
            if not np.any(sel):
                continue
            if not flag and np.any(~known[j2[sel], i2[sel]]):
                raise DisconnectedLevelSet("level curve crosses an unresolved gap")
            t = _edge_roots(field, vals, known, alpha, ja[sel], ia[sel], d)
            ddj, ddi = DIRS[d]
            out[sel, 0] = grid.x[ia[sel]] + t * grid.hx * ddi
            out[sel, 1] = grid.y[ja[sel]] + t * grid.hy * ddj
        for e, p in zip(ids.tolist(), out):
            points[e] = p

    if len(hj):
        solve_edges(hj, hi_, "E", hj * nx + hi_)
    if len(vj):
        solve_edges(vj, vi, "N", ny * nx + vj * nx + vi)

    vals_c = vals

    def center_pos(j, i):
        c = (vals_c[j, i] + vals_c[j, (i + 1) % nx] + vals_c[j + 1, i] + vals_c[j + 1, (i + 1) % nx]) / 4
        return c > alpha

    links = _contour.cell_links(pos, center_pos)
    comps = _contour.stitch(links, points, grid.period, 1e-9 * grid.h)
    return _contour.single_arc(comps, grid.period)


# -- boundary gradients


@dataclass
class BoundarySamples:
    points: np.ndarray  # (m, 2)
    values: np.ndarray  # |grad u| (or the normal derivative magnitude)
    normals: np.ndarray  # unit normal pointing into the strip
    param: np.ndarray  # position along the arc (segment units)

    def __iter__(self):
        yield self.points
        yield self.values


def _deriv3(d1, d2, v0, v1, v2):
    """Derivative at 0 of the quadratic through (0, v0), (d1, v1), (d2, v2)."""
    return ((v1 - v0) * d2 * d2 - (v2 - v0) * d1 * d1) / (d1 * d2 * (d2 - d1))


def boundary_normal_derivative(field: PotentialField, which: int, signed: bool = False) -> BoundarySamples:
    """Inward normal derivative of the solved field on curve ``which``.

    Samples are the crossings of the curve with grid lines.  Along each line
    the derivative at the crossing comes from the quadratic through the
    crossing and the next two samples inside the strip; dividing by the
    cosine between line and normal gives the normal derivative.  Each crossing
    uses the grid direction closer to its normal.
    """
    cut, grid = field.cut, field.grid
    ny, nx = grid.ny, grid.nx
    c = cut.cross[which - 1]
    known = cut.known
    U = field.U
    pts, ders, nrms, prm = [], [], [], []
    # into the strip from curve 1 is N/E/W..., handled per direction of travel from the crossing
    for d in DIRS:
        back = BACK[d]
        dj, di = DIRS[d]
        h = grid.step(d)
        # nodes whose nearest crossing looking backwards is on this curve;
        # a crossing on the neighbouring node may round to just above h
        dist_b = cut.dist[back]
        m = known & (cut.cls == INSIDE) & (dist_b <= h * (1 + 1e-9)) & (cut.curve[back] == which)
        jj, ii = np.nonzero(m)
        if len(jj) == 0:
            continue
        cid = cut.cidx[back][jj, ii]
        tx, ty = c.tx[cid], c.ty[cid]
        nxn, nyn = -ty, tx  # left normal
        cosang = nxn * di + nyn * dj
        use = np.abs(cosang) >= math.sqrt(0.5) - 1e-12
        if which == 1:
            use &= cosang > 0
        else:
            use &= cosang < 0
        if not np.any(use):
            continue
        jj, ii, cid, cosang = jj[use], ii[use], cid[use], cosang[use]
        d0 = dist_b[jj, ii]
        v0 = field.side_value(which, c.x[cid], c.y[cid])
        v1 = U[jj, ii]
        # third sample: next node along d, or a crossing before it
        dn = cut.dist[d][jj, ii]
        jn, inn = jj + dj, (ii + di) % nx
        jnc = np.clip(jn, 0, ny - 1)
        has_cross = dn <= h
        d2 = np.where(has_cross, d0 + dn, d0 + h)
        v2 = U[jnc, inn].copy()
        if np.any(has_cross):
            k = np.nonzero(has_cross)[0]
            for curve in (1, 2):
                kc = k[cut.curve[d][jj[k], ii[k]] == curve]
                if len(kc):
                    px, py = cut.crossing_point(curve, cut.cidx[d][jj[kc], ii[kc]])
                    v2[kc] = field.side_value(curve, px, py)
        bad = ~has_cross & ~known[jnc, inn]
        if np.any(bad):
            raise DegenerateNormal("strip too thin for a three-point boundary difference")
        g = _deriv3(d0, d2, v0, v1, v2)
        # directional derivative along d; normal derivative into strip
        nd = g / np.abs(cosang)
        pts.append(np.column_stack([c.x[cid], c.y[cid]]))
        ders.append(nd)
        sgn = 1.0 if which == 1 else -1.0
        nrms.append(sgn * np.column_stack([-c.ty[cid], c.tx[cid]]))
        prm.append(c.param[cid])
    if not pts:
        raise DegenerateNormal("no usable boundary samples")
    P = np.vstack(pts)
    D = np.concatenate(ders)
    Nn = np.vstack(nrms)
    S = np.concatenate(prm)
    # one sample per crossing; order along the arc and fold into one period
    n_arc = (field.cut.lower if which == 1 else field.cut.upper).n
    S = np.mod(S, n_arc)
    _, uniq = np.unique(np.round(S, 12), return_index=True)
    P, D, Nn, S = P[uniq], D[uniq], Nn[uniq], S[uniq]
    order = np.argsort(S)
    vals = D[order] if signed else np.abs(D[order])
    return BoundarySamples(P[order], vals, Nn[order], S[order])


def boundary_gradient(field: PotentialField, which: int) -> BoundarySamples:
    """|grad U| sampled on boundary ``which`` (1 = lower, 2 = upper)."""
    out = boundary_normal_derivative(field, which)
    if np.any(out.values <= 0):
        raise DegenerateNormal("non-positive boundary gradient sample")
    return out


def interior_gradient(field: PotentialField):
    """Central-difference |grad U| at nodes whose four neighbours are inside.

    Returns (mask, |grad U|) with NaN outside the mask.
    """
    cut, grid = field.cut, field.grid
    U = field.U
    ins = cut.cls == INSIDE
    ok = ins.copy()
    for d in DIRS:
        ok &= cut.dist[d] > grid.step(d)
    ok[0, :] = ok[-1, :] = False
    ok &= np.roll(ins, 1, 1) & np.roll(ins, -1, 1)
    ok[1:-1] &= ins[:-2] & ins[2:]
    gx = (np.roll(U, -1, 1) - np.roll(U, 1, 1)) / (2 * grid.hx)
    gy = np.full_like(U, np.nan)
    gy[1:-1] = (U[2:] - U[:-2]) / (2 * grid.hy)
    g = np.where(ok, np.hypot(gx, gy), np.nan)
    return ok, g


def interpolate(field: PotentialField, x, y):
    """Bilinear interpolation of a solved field at arbitrary points (NaN if a corner is unknown)."""
    grid = field.grid
    x = np.mod(np.asarray(x, dtype=float), grid.period)
    y = np.asarray(y, dtype=float)
    fi = x / grid.hx
    fj = (y - grid.ylo) / grid.hy
    i0 = np.floor(fi).astype(int) % grid.nx
    j0 = np.clip(np.floor(fj).astype(int), 0, grid.ny - 2)
    s = fi - np.floor(fi)
    t = fj - j0
    i1 = (i0 + 1) % grid.nx
    U = field.U
    return (1 - s) * (1 - t) * U[j0, i0] + s * (1 - t) * U[j0, i1] + (1 - s) * t * U[j0 + 1, i0] + s * t * U[j0 + 1, i1]


def flux(field: PotentialField, arc: PeriodicArc) -> float:
    """Approximate flux integral of |grad U| over a level arc inside the strip."""
    ok, g = interior_gradient(field)
    gf = PotentialField(field.cut, np.where(ok, g, np.nan), field.values, 0.0)
    c = arc.closed()
    mid = 0.5 * (c[1:] + c[:-1])
    ds = np.hypot(*np.diff(c, axis=0).T)
    val = interpolate(gf, mid[:, 0], mid[:, 1])
    good = np.isfinite(val)
    return float(np.sum(val[good] * ds[good]) * ds.sum() / ds[good].sum())


def _vertex_normals(arc: PeriodicArc) -> np.ndarray:
    """Unit left normals at vertices from central-difference tangents."""
    v = arc.vertices
    P = arc.period
    nxt = np.roll(v, -1, axis=0)
    nxt[-1, 0] += P
    prv = np.roll(v, 1, axis=0)
    prv[0, 0] -= P
    t = nxt - prv
    t /= np.hypot(t[:, 0], t[:, 1])[:, None]
    return np.column_stack([-t[:, 1], t[:, 0]])


def level_offset(field: PotentialField, which: int, delta: float) -> PeriodicArc:
    """The curve {U = (which - 1) + delta} next to boundary ``which``.

    Inside the strip this is a level curve.  On the outside U is continued
    linearly along the boundary normals, so the curve sits at normal distance
    |delta| / |grad U| from the boundary.
    """
    arc = field.cut.lower if which == 1 else field.cut.upper
    if delta == 0.0:
        return arc
    level = (which - 1) + delta
    if 0.0 < level < 1.0:
        return level_curve(field, level)
    bs = boundary_gradient(field, which)
    n = arc.n
    k = np.arange(n, dtype=float)
    s = np.concatenate([bs.param - n, bs.param, bs.param + n])
    g = np.interp(k, s, np.tile(bs.values, 3))
    nin = _vertex_normals(arc) * (1.0 if which == 1 else -1.0)
    pts = arc.vertices - (abs(delta) / g)[:, None] * nin
    return PeriodicArc(pts, arc.period)
