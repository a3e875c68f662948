"""Periodic planar arcs stored as one-period polylines.

An arc is an infinite curve invariant under the translation (x, y) -> (x + P, y).
We keep the vertices of one period; the vertex after the last one is the first
vertex shifted by (P, 0).  Predicates that need the infinite curve look at a few
neighbouring period copies.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArc, PeriodMismatch

TOUCH_TOL = 1e-12
STRICT_REL = 1e-9


class Ordering(enum.Enum):
    StrictLess = "StrictLess"
    WeakLess = "WeakLess"
    Equal = "Equal"
    WeakGreater = "WeakGreater"
    StrictGreater = "StrictGreater"
    Incomparable = "Incomparable"

    def is_le(self) -> bool:
        return self in (Ordering.StrictLess, Ordering.WeakLess, Ordering.Equal)

    def is_ge(self) -> bool:
        return self in (Ordering.StrictGreater, Ordering.WeakGreater, Ordering.Equal)


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("non-finite point")


class PeriodicArc:
    """P-periodic directed arc, parametrised left to right.

    Parameters
    ----------
    vertices : array_like, shape (n, 2)
        One period of vertices.  The closure vertex is ``vertices[0] + (P, 0)``.
    period : float
    validate : bool
        Run the structural checks (vertex count, distinct vertices,
        no self crossing).
    """

    __slots__ = ("_v", "period")

    def __init__(self, vertices, period: float, validate: bool = True):
        v = np.array(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise InvalidArc("vertices must have shape (n, 2)")
        if not period > 0:
            raise InvalidArc("period must be positive")
        v.setflags(write=False)
        self._v = v
        self.period = float(period)
        if validate:
            self._validate()

    @property
    def vertices(self) -> np.ndarray:
        return self._v

    @property
    def n(self) -> int:
        return len(self._v)

    def __len__(self):
        return len(self._v)

    def __repr__(self):
        return f"PeriodicArc(n={self.n}, period={self.period:g})"

    # -- construction helpers
    @classmethod
    def from_graph(cls, f, period: float, n: int = 256, x0: float = 0.0) -> "PeriodicArc":
        x = x0 + period * np.arange(n) / n
        return cls(np.column_stack([x, f(x)]), period)

    @classmethod
    def flat(cls, y: float, period: float, n: int = 64) -> "PeriodicArc":
        return cls.from_graph(lambda x: np.full_like(x, y), period, n)

    def closed(self) -> np.ndarray:
        """Vertices plus the closure vertex, shape (n+1, 2)."""
        return np.vstack([self._v, self._v[:1] + (self.period, 0.0)])

    def segments(self, copies=(0,)) -> tuple[np.ndarray, np.ndarray]:
        c = self.closed()
        a0, b0 = c[:-1], c[1:]
        sh = np.array([[k * self.period, 0.0] for k in copies])
        a = a0[None, :, :] + sh[:, None, :]
        b = b0[None, :, :] + sh[:, None, :]
        # the closing vertex of copy k must equal the first vertex of copy k+1
        # bit for bit, or crossing counts at the seam go wrong
        b[:, -1, 0] = c[0, 0] + (np.asarray(copies) + 1) * self.period
        return a.reshape(-1, 2), b.reshape(-1, 2)

    def copies_needed(self, extra: int = 1) -> range:
        xs = self._v[:, 0]
        span = xs.max() - xs.min()
        k = int(math.ceil(span / self.period + 1e-12))
        return range(-k - extra, 1 + extra)

    def shifted(self, dx: float = 0.0, dy: float = 0.0) -> "PeriodicArc":
        return PeriodicArc(self._v + (dx, dy), self.period, validate=False)

    def rolled(self, k: int) -> "PeriodicArc":
        """Same curve with the vertex list starting at index k."""
        n = self.n
        k %= n
        c = np.vstack([self._v[k:], self._v[:k] + (self.period, 0.0)])
        return PeriodicArc(c, self.period, validate=False)

    def x_normalized(self) -> "PeriodicArc":
        """Shift by a multiple of P so the first vertex has x in [0, P)."""
        k = math.floor(self._v[0, 0] / self.period)
        return self.shifted(-k * self.period, 0.0) if k else self

    def is_graph(self) -> bool:
        dx = np.diff(self.closed()[:, 0])
        return bool(np.all(dx > 0))

    def y_at(self, x) -> np.ndarray:
        """Height of a graph-like arc at abscissae x (periodic linear interpolation)."""
        c = self.closed()
        x = np.asarray(x, dtype=float)
        xp = np.concatenate([c[:-1, 0] - self.period, c[:, 0], c[1:, 0] + self.period])
        yp = np.concatenate([c[:-1, 1], c[:, 1], c[1:, 1]])
        x0 = c[0, 0]
        xr = x0 + np.mod(x - x0, self.period)
        return np.interp(xr, xp, yp)

    # -- validation
    def _validate(self):
        v = self._v
        if len(v) < 3:
            raise InvalidArc("need at least 3 vertices per period")
        if not np.all(np.isfinite(v)):
            raise InvalidArc("non-finite vertex")
        seg = np.diff(self.closed(), axis=0)
        if np.min(np.hypot(seg[:, 0], seg[:, 1])) <= 0.0:
            raise InvalidArc("consecutive vertices coincide")
        if _self_crossing(self):
            raise InvalidArc("arc crosses itself")


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _self_crossing(arc: PeriodicArc) -> bool:
    n = arc.n
    copies = list(arc.copies_needed(extra=1))
    A, B = arc.segments(copies)
    base = copies.index(0) * n
    xmin = np.minimum(A[:, 0], B[:, 0])
    xmax = np.maximum(A[:, 0], B[:, 0])
    order = np.argsort(xmin, kind="stable")
    xs_sorted = xmin[order]
    width = float(np.max(xmax - xmin))
    bi = np.arange(base, base + n)
    lo = np.searchsorted(xs_sorted, xmin[bi] - width - 1e-12, side="left")
    hi = np.searchsorted(xs_sorted, xmax[bi] + 1e-12, side="right")
    cnt = hi - lo
    if cnt.sum() == 0:
        return False
    i = np.repeat(bi, cnt)
    starts = np.repeat(lo - np.cumsum(np.concatenate([[0], cnt[:-1]])), cnt)
    j = order[np.arange(cnt.sum()) + starts]
    # drop identical and adjacent segments (shared endpoints); copies are laid out consecutively
    adjacent = np.abs(i - j) == 1
    keep = (j != i) & ~adjacent
    i, j = i[keep], j[keep]
    if len(i) == 0:
        return False
    p1, p2, q1, q2 = A[i], B[i], A[j], B[j]
    d1 = _orient(*p1.T, *p2.T, *q1.T)
    d2 = _orient(*p1.T, *p2.T, *q2.T)
    d3 = _orient(*q1.T, *q2.T, *p1.T)
    d4 = _orient(*q1.T, *q2.T, *p2.T)
    scale = np.maximum(np.hypot(*(p2 - p1).T), np.hypot(*(q2 - q1).T))
    tol = TOUCH_TOL * np.maximum(scale, 1.0)
    proper = (d1 * d2 < 0) & (d3 * d4 < 0) & (np.abs(d1) > tol) & (np.abs(d2) > tol) & (np.abs(d3) > tol) & (np.abs(d4) > tol)
    return bool(np.any(proper))


def arc_length(arc: PeriodicArc) -> float:
    d = np.diff(arc.closed(), axis=0)
    return float(np.sum(np.hypot(d[:, 0], d[:, 1])))


def turning_angles(arc: PeriodicArc) -> np.ndarray:
    """Signed exterior angle at each vertex (positive for left turns)."""
    c = arc.closed()
    d = np.diff(c, axis=0)
    prev = np.roll(d, 1, axis=0)
    cross = prev[:, 0] * d[:, 1] - prev[:, 1] * d[:, 0]
    dot = prev[:, 0] * d[:, 0] + prev[:, 1] * d[:, 1]
    return np.arctan2(cross, dot)


def total_curvature(arc: PeriodicArc) -> float:
    return float(np.sum(np.abs(turning_angles(arc))))


def _point_segment_dist(px, py, ax, ay, bx, by):
    # broadcasting helper: all arguments broadcast together
    dx = bx - ax
    dy = by - ay
    L2 = dx * dx + dy * dy
    t = ((px - ax) * dx + (py - ay) * dy) / np.where(L2 > 0, L2, 1.0)
    t = np.clip(t, 0.0, 1.0)
    ex = ax + t * dx - px
    ey = ay + t * dy - py
    return np.sqrt(ex * ex + ey * ey)


def distances_to_arc(points, arc: PeriodicArc, chunk: int = 2048) -> np.ndarray:
    """Exact distance from each point to the periodically extended polyline."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    P = arc.period
    xmin = arc.vertices[:, 0].min()
    # fold points into one reference period, then scan neighbouring copies
    k = np.floor((pts[:, 0] - xmin) / P)
    px = pts[:, 0] - k * P
    py = pts[:, 1]
    A, B = arc.segments(arc.copies_needed(extra=1))
    out = np.empty(len(pts))
    for s in range(0, len(pts), chunk):
        e = s + chunk
        d = _point_segment_dist(px[s:e, None], py[s:e, None], A[None, :, 0], A[None, :, 1], B[None, :, 0], B[None, :, 1])
        out[s:e] = d.min(axis=1)
    return out


def distance_to_arc(p, arc: PeriodicArc) -> float:
    if isinstance(p, Point2):
        p = (p.x, p.y)
    return float(distances_to_arc(np.asarray(p, dtype=float)[None, :], arc)[0])


def vertical_crossings(arc: PeriodicArc, x: float) -> np.ndarray:
    """Sorted y values where the vertical line through x meets the extended arc."""
    P = arc.period
    A, B = arc.segments(arc.copies_needed(extra=1))
    xmin = arc.vertices[:, 0].min()
    xr = xmin + np.mod(x - xmin, P)
    m = ((A[:, 0] <= xr) & (xr < B[:, 0])) | ((B[:, 0] <= xr) & (xr < A[:, 0]))
    a, b = A[m], B[m]
    t = (xr - a[:, 0]) / (b[:, 0] - a[:, 0])
    return np.sort(a[:, 1] + t * (b[:, 1] - a[:, 1]))


def below_mask(points, arc: PeriodicArc) -> np.ndarray:
    """True where a point lies strictly in the lower complement D1 of the arc.

    Uses parity of crossings of the upward vertical ray.  Points on the arc
    get an arbitrary answer; callers handle them through distances.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    P = arc.period
    A, B = arc.segments(arc.copies_needed(extra=1))
    xmin = arc.vertices[:, 0].min()
    px = xmin + np.mod(pts[:, 0] - xmin, P)
    py = pts[:, 1]
    out = np.empty(len(pts), dtype=bool)
    ax, ay, bx, by = A[:, 0], A[:, 1], B[:, 0], B[:, 1]
    for s in range(0, len(pts), 2048):
        x = px[s : s + 2048, None]
        y = py[s : s + 2048, None]
        m = ((ax <= x) & (x < bx)) | ((bx <= x) & (x < ax))
        denom = np.where(bx != ax, bx - ax, 1.0)
        yc = ay + (x - ax) / denom * (by - ay)
        cnt = np.sum(m & (yc > y), axis=1)
        out[s : s + 2048] = (cnt % 2) == 1
    return out


def _check_period(a: PeriodicArc, b: PeriodicArc):
    if not math.isclose(a.period, b.period, rel_tol=1e-12, abs_tol=0.0):
        raise PeriodMismatch(f"periods differ: {a.period} vs {b.period}")


def clearance(a: PeriodicArc, b: PeriodicArc) -> float:
    """Signed clearance for the relation a <= b.

    Positive value d means every vertex of a lies below b and every vertex of b
    lies above a, with distance at least d.  A negative value is minus the
    largest penetration.
    """
    _check_period(a, b)
    da = distances_to_arc(a.vertices, b)
    sa = np.where(below_mask(a.vertices, b), da, -da)
    db = distances_to_arc(b.vertices, a)
    sb = np.where(~below_mask(b.vertices, a), db, -db)
    return float(min(sa.min(), sb.min()))


def compare(a: PeriodicArc, b: PeriodicArc, tol: float | None = None) -> Ordering:
    _check_period(a, b)
    if tol is None:
        tol = STRICT_REL * a.period
    le = clearance(a, b)
    ge = clearance(b, a)
    if le > tol:
        return Ordering.StrictLess
    if ge > tol:
        return Ordering.StrictGreater
    if le >= -tol and ge >= -tol:
        return Ordering.Equal
    if le >= -tol:
        return Ordering.WeakLess
    if ge >= -tol:
        return Ordering.WeakGreater
    return Ordering.Incomparable


def hausdorff(a: PeriodicArc, b: PeriodicArc) -> float:
    _check_period(a, b)
    return float(max(distances_to_arc(a.vertices, b).max(), distances_to_arc(b.vertices, a).max()))


def resample(arc: PeriodicArc, n: int, validate: bool = True) -> PeriodicArc:
    """n vertices with equal chord lengths, starting at the first vertex.

    The points lie on the original polyline.  Chords are equalised by a short
    fixed-point iteration, which makes a second resample a no-op.
    """
    if n < 8:
        raise ValueError("resample needs n >= 8")
    c = arc.closed()
    seg = np.hypot(*np.diff(c, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    L = s[-1]
    P = arc.period

    def at(t):
        return np.column_stack([np.interp(t, s, c[:, 0]), np.interp(t, s, c[:, 1])])

    dt = np.full(n, L / n)
    for _ in range(60):
        t = np.concatenate([[0.0], np.cumsum(dt[:-1])])
        p = at(t)
        q = np.vstack([p, p[:1] + (P, 0.0)])
        ch = np.hypot(*np.diff(q, axis=0).T)
        mean = ch.mean()
        if np.max(np.abs(ch / mean - 1.0)) < 1e-14:
            break
        dt = dt * (mean / np.where(ch > 0, ch, mean))
        dt *= L / dt.sum()
    return PeriodicArc(p, P, validate=validate)


def resample_fast(arc: PeriodicArc, n: int) -> PeriodicArc:
    """Single-pass equal arc-length resampling (no chord equalisation)."""
    c = arc.closed()
    seg = np.hypot(*np.diff(c, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    t = s[-1] * np.arange(n) / n
    p = np.column_stack([np.interp(t, s, c[:, 0]), np.interp(t, s, c[:, 1])])
    return PeriodicArc(p, arc.period, validate=False)


@dataclass(frozen=True)
class ArcPair:
    gamma1: PeriodicArc
    gamma2: PeriodicArc

    def __post_init__(self):
        _check_period(self.gamma1, self.gamma2)
        if compare(self.gamma1, self.gamma2) is not Ordering.StrictLess:
            raise InvalidArc("pair is not strictly ordered (gamma1 < gamma2 fails)")

    @property
    def period(self) -> float:
        return self.gamma1.period

    @classmethod
    def unchecked(cls, g1: PeriodicArc, g2: PeriodicArc) -> "ArcPair":
        obj = object.__new__(cls)
        object.__setattr__(obj, "gamma1", g1)
        object.__setattr__(obj, "gamma2", g2)
        return obj

    def shifted(self, dy1: float, dy2: float) -> "ArcPair":
        return ArcPair(self.gamma1.shifted(0, dy1), self.gamma2.shifted(0, dy2))

    def y_range(self) -> tuple[float, float]:
        return float(self.gamma1.vertices[:, 1].min()), float(self.gamma2.vertices[:, 1].max())


def pair_hausdorff(p: ArcPair, q: ArcPair) -> float:
    return max(hausdorff(p.gamma1, q.gamma1), hausdorff(p.gamma2, q.gamma2))


def pair_le(p: ArcPair, q: ArcPair, slack: float = 0.0) -> bool:
    """Componentwise p <= q, allowing penetration up to ``slack``."""
    return clearance(p.gamma1, q.gamma1) >= -slack and clearance(p.gamma2, q.gamma2) >= -slack


# -- CSV serialisation


def write_arc_csv(path, arc: PeriodicArc) -> None:
    c = arc.vertices
    d = np.hypot(*np.diff(c, axis=0).T)
    t = np.concatenate([[0.0], np.cumsum(d)])
    with open(path, "w") as fh:
        fh.write(f"# period={arc.period!r}\n")
        fh.write("t,x,y\n")
        for ti, (x, y) in zip(t, c):
            fh.write(f"{float(ti)!r},{float(x)!r},{float(y)!r}\n")


def read_arc_csv(path, period: float | None = None) -> PeriodicArc:
    P = period
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("period="):
                P = float(body.split("=", 1)[1])
            continue
        if line.startswith("t,"):
            continue
        parts = line.split(",")
        rows.append((float(parts[1]), float(parts[2])))
    if P is None:
        raise InvalidArc(f"{path}: missing '# period=' line")
    return PeriodicArc(np.array(rows), P)
