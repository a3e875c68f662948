"""Flow-speed fields a(x, y) and the constants of the admissible class.

Every field knows its value and the derivatives of ln a up to second order.
Analytic fields supply them in closed form; anything else falls back to
central differences with step ``1e-4 * P``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import NonPositiveField

TWO_PI = 2.0 * math.pi


class FlowSpeed:
    """Strictly positive, P-periodic (in x) speed field.

    Subclasses implement ``eval`` and ``log_derivs``; the latter returns
    ``(lx, ly, lxx, lxy, lyy)`` for l = ln a.
    """

    kind = "analytic-expression"

    def __init__(self, period: float = TWO_PI):
        self.period = float(period)

    def eval(self, x, y):
        raise NotImplementedError

    def __call__(self, x, y):
        return self.eval(x, y)

    @property
    def h_fd(self) -> float:
        return 1e-4 * self.period

    def log_derivs(self, x, y):
        return _fd_log_derivs(self, x, y, self.h_fd)

    def grad(self, x, y):
        a = self.eval(x, y)
        lx, ly, *_ = self.log_derivs(x, y)
        return a * lx, a * ly

    def hessian(self, x, y):
        a = self.eval(x, y)
        lx, ly, lxx, lxy, lyy = self.log_derivs(x, y)
        return a * (lxx + lx * lx), a * (lxy + lx * ly), a * (lyy + ly * ly)

    def log_laplacian(self, x, y):
        _, _, lxx, _, lyy = self.log_derivs(x, y)
        return lxx + lyy

    def log_grad(self, x, y):
        lx, ly, *_ = self.log_derivs(x, y)
        return lx, ly

    def with_period(self, period: float) -> "FlowSpeed":
        self.period = float(period)
        return self


def _fd_log_derivs(f: FlowSpeed, x, y, h):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)

    def L(xx, yy):
        return np.log(f.eval(xx, yy))

    l0 = L(x, y)
    lxp, lxm = L(x + h, y), L(x - h, y)
    lyp, lym = L(x, y + h), L(x, y - h)
    lx = (lxp - lxm) / (2 * h)
    ly = (lyp - lym) / (2 * h)
    lxx = (lxp - 2 * l0 + lxm) / (h * h)
    lyy = (lyp - 2 * l0 + lym) / (h * h)
    lxy = (L(x + h, y + h) - L(x + h, y - h) - L(x - h, y + h) + L(x - h, y - h)) / (4 * h * h)
    return lx, ly, lxx, lxy, lyy


def fd_grad(f: FlowSpeed, x, y, h: float | None = None):
    """Central-difference gradient of a, independent of any analytic override."""
    h = f.h_fd if h is None else h
    gx = (f.eval(x + h, y) - f.eval(x - h, y)) / (2 * h)
    gy = (f.eval(x, y + h) - f.eval(x, y - h)) / (2 * h)
    return gx, gy


def _zeros(x, y):
    return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)


class Constant(FlowSpeed):
    def __init__(self, value: float, period: float = TWO_PI):
        super().__init__(period)
        self.value = float(value)

    def eval(self, x, y):
        return np.full(np.broadcast(np.asarray(x), np.asarray(y)).shape, self.value)

    def log_derivs(self, x, y):
        z = _zeros(x, y)
        return z, z, z, z, z

    def __repr__(self):
        return f"Constant({self.value})"


class Cosh(FlowSpeed):
    """a = scale * cosh(beta * (y - y0))."""

    def __init__(self, beta: float = 1.0, scale: float = 1.0, y0: float = 0.0, period: float = TWO_PI):
        super().__init__(period)
        self.beta, self.scale, self.y0 = float(beta), float(scale), float(y0)

    def eval(self, x, y):
        y = np.asarray(y, dtype=float)
        return self.scale * np.cosh(self.beta * (y - self.y0)) + 0.0 * np.asarray(x)

    def log_derivs(self, x, y):
        u = self.beta * (np.asarray(y, dtype=float) - self.y0)
        z = _zeros(x, y)
        t = np.tanh(u) + z
        return z, self.beta * t, z, z, self.beta**2 * (1.0 - t * t)

    def __repr__(self):
        return f"Cosh(beta={self.beta}, scale={self.scale}, y0={self.y0})"


class ExpPoly(FlowSpeed):
    """a = exp(q(y)) with q(y) = sum_k c_k y^k.

    Any x dependence of a polynomial would break periodicity, so q is a
    polynomial in y only; x variation comes from ``HarmonicX`` factors.
    """

    def __init__(self, coeffs, period: float = TWO_PI):
        super().__init__(period)
        self.coeffs = np.asarray(coeffs, dtype=float)
        self._d1 = np.polynomial.polynomial.polyder(self.coeffs) if len(self.coeffs) > 1 else np.zeros(1)
        self._d2 = np.polynomial.polynomial.polyder(self._d1) if len(self._d1) > 1 else np.zeros(1)

    def _q(self, c, y):
        return np.polynomial.polynomial.polyval(np.asarray(y, dtype=float), c)

    def eval(self, x, y):
        return np.exp(self._q(self.coeffs, y)) + 0.0 * np.asarray(x)

    def log_derivs(self, x, y):
        z = _zeros(x, y)
        return z, self._q(self._d1, y) + z, z, z, self._q(self._d2, y) + z

    def __repr__(self):
        return f"ExpPoly({self.coeffs.tolist()})"


class HarmonicX(FlowSpeed):
    """a = 1 + amp * sin(k x + phase), k = 2 pi mode / P."""

    def __init__(self, amp: float, mode: int = 1, phase: float = 0.0, period: float = TWO_PI):
        super().__init__(period)
        if not abs(amp) < 1:
            raise NonPositiveField("HarmonicX needs |amp| < 1")
        self.amp, self.mode, self.phase = float(amp), int(mode), float(phase)

    @property
    def k(self):
        return TWO_PI * self.mode / self.period

    def eval(self, x, y):
        x = np.asarray(x, dtype=float)
        return 1.0 + self.amp * np.sin(self.k * x + self.phase) + 0.0 * np.asarray(y)

    def log_derivs(self, x, y):
        th = self.k * np.asarray(x, dtype=float) + self.phase
        z = _zeros(x, y)
        s, c = np.sin(th), np.cos(th)
        a = 1.0 + self.amp * s
        lx = self.amp * self.k * c / a + z
        lxx = (-self.amp * self.k**2 * s * a - (self.amp * self.k * c) ** 2) / a**2 + z
        return lx, z, lxx, z, z

    def __repr__(self):
        return f"HarmonicX(amp={self.amp}, mode={self.mode}, phase={self.phase})"


class Product(FlowSpeed):
    def __init__(self, *factors: FlowSpeed):
        super().__init__(factors[0].period)
        self.factors = factors

    def eval(self, x, y):
        out = self.factors[0].eval(x, y)
        for f in self.factors[1:]:
            out = out * f.eval(x, y)
        return out

    def log_derivs(self, x, y):
        parts = [f.log_derivs(x, y) for f in self.factors]
        return tuple(sum(p[k] for p in parts) for k in range(5))

    def with_period(self, period):
        for f in self.factors:
            f.with_period(period)
        return super().with_period(period)

    def __repr__(self):
        return "Product(" + ", ".join(map(repr, self.factors)) + ")"


class Scaled(FlowSpeed):
    def __init__(self, factor: float, inner: FlowSpeed):
        super().__init__(inner.period)
        self.factor, self.inner = float(factor), inner

    def eval(self, x, y):
        return self.factor * self.inner.eval(x, y)

    def log_derivs(self, x, y):
        return self.inner.log_derivs(x, y)

    def with_period(self, period):
        self.inner.with_period(period)
        return super().with_period(period)

    def __repr__(self):
        return f"Scaled({self.factor}, {self.inner!r})"


class Callable2D(FlowSpeed):
    """Wraps a plain function of (x, y); derivatives by finite differences."""

    def __init__(self, fn, period: float = TWO_PI, name: str = "callable"):
        super().__init__(period)
        self.fn, self.name = fn, name

    def eval(self, x, y):
        return np.asarray(self.fn(np.asarray(x, dtype=float), np.asarray(y, dtype=float)), dtype=float)

    def __repr__(self):
        return f"Callable2D({self.name})"


class Tabulated(FlowSpeed):
    """Bicubic spline through samples on a rectangular grid, periodic in x."""

    kind = "tabulated-grid"

    def __init__(self, xs, ys, values, period: float):
        from scipy.interpolate import RectBivariateSpline

        super().__init__(period)
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        v = np.asarray(values, dtype=float)  # shape (len(xs), len(ys))
        if np.any(v <= 0):
            raise NonPositiveField("tabulated field has non-positive samples")
        # drop a duplicated seam column, then wrap three columns each side
        if np.isclose(xs[-1] - xs[0], period):
            xs, v = xs[:-1], v[:-1]
        w = 3
        xe = np.concatenate([xs[-w:] - period, xs, xs[:w] + period])
        ve = np.concatenate([v[-w:], v, v[:w]], axis=0)
        self._x0 = xs[0]
        self._ylim = (ys[0], ys[-1])
        self._spl = RectBivariateSpline(xe, ys, np.log(ve), kx=3, ky=3)

    def _xy(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        xr = self._x0 + np.mod(x - self._x0, self.period)
        return xr, np.clip(y, *self._ylim)

    def eval(self, x, y):
        xr, yr = self._xy(x, y)
        return np.exp(self._spl.ev(xr, yr))

    def log_derivs(self, x, y):
        xr, yr = self._xy(x, y)
        s = self._spl.ev
        return s(xr, yr, 1, 0), s(xr, yr, 0, 1), s(xr, yr, 2, 0), s(xr, yr, 1, 1), s(xr, yr, 0, 2)

    @classmethod
    def from_csv(cls, path, period: float) -> "Tabulated":
        data = np.loadtxt(path, delimiter=",", comments="#", skiprows=1)
        xs = np.unique(data[:, 0])
        ys = np.unique(data[:, 1])
        grid = np.full((len(xs), len(ys)), np.nan)
        ix = np.searchsorted(xs, data[:, 0])
        iy = np.searchsorted(ys, data[:, 1])
        grid[ix, iy] = data[:, 2]
        if np.isnan(grid).any():
            raise ValueError(f"{path}: samples do not form a full rectangular grid")
        return cls(xs, ys, grid, period)

    def __repr__(self):
        return "Tabulated(...)"


class TrigSeries:
    """Truncated Fourier series of a periodic function sampled at arbitrary abscissae."""

    def __init__(self, x, v, period: float, modes: int = 16, n_uniform: int = 256):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        order = np.argsort(np.mod(x, period))
        xs = np.mod(x, period)[order]
        vs = v[order]
        xu = period * np.arange(n_uniform) / n_uniform
        vu = np.interp(xu, xs, vs, period=period)
        c = np.fft.rfft(vu) / n_uniform
        m = min(modes, len(c) - 1)
        self.period = period
        self.c0 = c[0].real
        self.k = TWO_PI * np.arange(1, m + 1) / period
        self.a = 2 * c[1 : m + 1].real
        self.b = -2 * c[1 : m + 1].imag

    def __call__(self, x, deriv: int = 0):
        x = np.asarray(x, dtype=float)
        th = x[..., None] * self.k
        c, s = np.cos(th), np.sin(th)
        if deriv == 0:
            return self.c0 + c @ self.a + s @ self.b
        if deriv == 1:
            return (-s * self.k) @ self.a + (c * self.k) @ self.b
        if deriv == 2:
            k2 = self.k**2
            return (-c * k2) @ self.a + (-s * k2) @ self.b
        raise ValueError("deriv must be 0, 1 or 2")


class BoundaryProfile(FlowSpeed):
    """Field equal to a prescribed profile G(x) on a graph curve y = Y(x).

    a = G(x) * exp(kappa * tanh(sigma * (Y(x) - y))), sigma = +1 for the lower
    boundary and -1 for the upper one, so the field grows away from the stream
    and shrinks towards it.
    """

    def __init__(self, log_g: TrigSeries, curve: TrigSeries, side: int, growth: float = 0.5, period: float = TWO_PI):
        super().__init__(period)
        self.log_g, self.curve = log_g, curve
        self.sigma = 1.0 if side == 1 else -1.0
        self.growth = float(growth)

    def _u(self, x, y):
        return self.sigma * (self.curve(x) - np.asarray(y, dtype=float))

    def eval(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return np.exp(self.log_g(x) + self.growth * np.tanh(self._u(x, y)))

    def log_derivs(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        k, sg = self.growth, self.sigma
        t = np.tanh(self._u(x, y))
        S = 1.0 - t * t
        dS = -2.0 * t * S
        Y1, Y2 = self.curve(x, 1), self.curve(x, 2)
        ux, uy = sg * Y1, -sg
        lx = self.log_g(x, 1) + k * S * ux
        ly = k * S * uy + 0.0 * x
        lxx = self.log_g(x, 2) + k * (dS * ux * ux + S * sg * Y2)
        lxy = k * dS * ux * uy
        lyy = k * dS * uy * uy + 0.0 * x
        return lx, ly, lxx, lxy, lyy

    def __repr__(self):
        return f"BoundaryProfile(side={'1' if self.sigma > 0 else '2'}, growth={self.growth})"


# -- constants of the class


@dataclass(frozen=True)
class ClassConstants:
    a_lo: float
    a_hi: float
    d1_max: float
    d2_max: float
    log_lap_min: float
    steep: float
    log_lap_max: float = 0.0

    def as_tuple(self):
        return (self.a_lo, self.a_hi, self.d1_max, self.d2_max, self.log_lap_min, self.steep)


def _sample(a: FlowSpeed, region, n: int, scale: float = 1.0):
    x0, x1, y0, y1 = region
    X, Y = np.meshgrid(np.linspace(x0, x1, n), np.linspace(y0, y1, n), indexing="ij")
    v = scale * a.eval(X, Y)
    if not np.all(np.isfinite(v)) or np.any(v <= 0):
        raise NonPositiveField(f"{a!r} is not strictly positive on the sample region")
    lx, ly, lxx, lxy, lyy = a.log_derivs(X, Y)
    gx, gy = v * lx, v * ly
    hxx, hxy, hyy = v * (lxx + lx * lx), v * (lxy + lx * ly), v * (lyy + ly * ly)
    return v, np.hypot(gx, gy), np.max([np.abs(hxx), np.abs(hxy), np.abs(hyy)], axis=0), lxx + lyy


def class_constants(a: FlowSpeed, region, n: int = 256, scale: float = 1.0) -> ClassConstants:
    """Sampled extrema of ``scale * a`` over the rectangle (x0, x1, y0, y1)."""
    x0, x1, _, _ = region
    if x1 - x0 < a.period * (1 - 1e-12):
        raise ValueError("region must cover one period in x")
    v, g, h2, lap = _sample(a, region, n, scale)
    return ClassConstants(
        a_lo=float(v.min()),
        a_hi=float(v.max()),
        d1_max=float(g.max()),
        d2_max=float(h2.max()),
        log_lap_min=float(lap.min()),
        steep=float((g / v**2).max()),
        log_lap_max=float(lap.max()),
    )


@dataclass
class FlowSpeedPair:
    a1: FlowSpeed
    a2: FlowSpeed
    lambda1: float = 1.0
    lambda2: float = 1.0
    _cache: dict = dc_field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not (self.lambda1 > 0 and self.lambda2 > 0):
            raise ValueError("lambda factors must be positive")
        if not math.isclose(self.a1.period, self.a2.period, rel_tol=1e-12):
            raise ValueError("fields have different periods")

    @property
    def period(self) -> float:
        return self.a1.period

    @property
    def mu(self) -> float:
        return math.log(self.lambda2 / self.lambda1)

    @property
    def lambdas(self) -> tuple[float, float]:
        return self.lambda1, self.lambda2

    def field(self, i: int) -> FlowSpeed:
        return self.a1 if i == 1 else self.a2

    def lam(self, i: int) -> float:
        return self.lambda1 if i == 1 else self.lambda2

    def speed(self, i: int, x, y):
        """Effective speed lambda_i * a_i."""
        return self.lam(i) * self.field(i).eval(x, y)

    def with_lambdas(self, l1: float, l2: float) -> "FlowSpeedPair":
        return FlowSpeedPair(self.a1, self.a2, l1, l2)

    def same_field(self) -> bool:
        return self.a1 is self.a2 or repr(self.a1) == repr(self.a2)

    def constants(self, region, n: int = 256) -> tuple[ClassConstants, ClassConstants]:
        key = (tuple(round(float(r), 12) for r in region), n)
        if key not in self._cache:
            self._cache[key] = (
                class_constants(self.a1, region, n, self.lambda1),
                class_constants(self.a2, region, n, self.lambda2),
            )
        return self._cache[key]


def joint_constants(pair: FlowSpeedPair, region, n: int = 256) -> ClassConstants:
    c1, c2 = pair.constants(region, n)
    return ClassConstants(
        a_lo=min(c1.a_lo, c2.a_lo),
        a_hi=max(c1.a_hi, c2.a_hi),
        d1_max=max(c1.d1_max, c2.d1_max),
        d2_max=max(c1.d2_max, c2.d2_max),
        log_lap_min=min(c1.log_lap_min, c2.log_lap_min),
        steep=max(c1.steep, c2.steep),
        log_lap_max=max(c1.log_lap_max, c2.log_lap_max),
    )


def epsilon0(pair: FlowSpeedPair, region, n: int = 256) -> float:
    c = joint_constants(pair, region, n)
    if c.d1_max == 0.0:
        return 0.5
    return min(0.5, c.a_lo**2 / (2.0 * c.d1_max))


# -- manufactured problems


def manufacture_problem(pair, grid, growth: float = 0.5, modes: int = 16) -> FlowSpeedPair:
    """Fields for which ``pair`` solves the free-boundary problem.

    On each boundary the field equals the computed |grad U|.  Off the boundary
    it is extended by ``BoundaryProfile``; a positive ``growth`` makes nearby
    translated pairs strict lower/upper solutions, so brackets exist.
    """
    from .potential import boundary_gradient, solve_potential

    for g in (pair.gamma1, pair.gamma2):
        if not g.is_graph():
            raise ValueError("manufacture_problem needs graph-like boundaries")
    P = pair.period
    U = solve_potential(pair, grid)
    fields = []
    for i, g in ((1, pair.gamma1), (2, pair.gamma2)):
        pts, vals = boundary_gradient(U, i)
        log_g = TrigSeries(pts[:, 0], np.log(vals), P, modes=modes)
        v = g.vertices
        curve = TrigSeries(v[:, 0], v[:, 1], P, modes=max(modes, 64), n_uniform=max(1024, 4 * len(v)))
        fields.append(BoundaryProfile(log_g, curve, side=i, growth=growth, period=P))
    return FlowSpeedPair(fields[0], fields[1], 1.0, 1.0)


# -- config records


def field_from_spec(spec: dict, period: float = TWO_PI) -> FlowSpeed:
    """Build a field from a tagged record such as ``{"kind": "cosh", "beta": 1.0}``."""
    spec = dict(spec)
    out = _build_field(spec, period)
    if spec:
        raise ValueError(f"unknown keys in field record: {sorted(spec)}")
    return out


def _build_field(spec: dict, period: float) -> FlowSpeed:
    kind = spec.pop("kind", None)
    if kind == "constant":
        return Constant(spec.pop("value"), period)
    if kind == "cosh":
        return Cosh(spec.pop("beta", 1.0), spec.pop("scale", 1.0), spec.pop("y0", 0.0), period)
    if kind == "exp_poly":
        return ExpPoly(spec.pop("coeffs"), period)
    if kind == "harmonic_x":
        return HarmonicX(spec.pop("amp"), spec.pop("mode", 1), spec.pop("phase", 0.0), period)
    if kind == "product":
        return Product(*[field_from_spec(f, period) for f in spec.pop("factors")])
    if kind == "scale":
        return Scaled(spec.pop("factor"), field_from_spec(spec.pop("field"), period))
    if kind == "tabulated":
        return Tabulated.from_csv(spec.pop("path"), period)
    raise ValueError(f"unknown field kind {kind!r}")
