"""Diagnostics: nonexistence screens, curvature and gradient checks, capacity margins.

Each check returns plain numbers so a report can be assembled and serialised
without the solver objects.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np

from .errors import CommonCurveMissing, PreconditionFailed
from .field import ClassConstants, FlowSpeed, FlowSpeedPair, class_constants, joint_constants
from .geom import ArcPair, Ordering, arc_length, compare, pair_hausdorff
from .iterate import SolutionRecord, solve_bernoulli
from .potential import (
    Grid,
    GridSpec,
    PotentialField,
    boundary_gradient,
    boundary_normal_derivative,
    interior_gradient,
    interpolate,
    level_curve,
    solve_dirichlet,
)
from .reduced import discrete_curvature


@dataclass
class Verdict:
    blocked: bool
    details: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.blocked = bool(self.blocked)
        self.details = {k: (v if isinstance(v, (bool, str)) else float(v)) for k, v in self.details.items()}

    @property
    def label(self) -> str:
        return "blocked" if self.blocked else "not-blocked"

    def to_json(self) -> dict:
        return {"verdict": self.label, **self.details}


# -- nonexistence screens


def screen_nonexistence(fields: FlowSpeedPair, region, n: int = 256) -> tuple[Verdict, Verdict]:
    """(gap test, mu test) on the rectangle ``region`` = (x0, x1, y0, y1).

    The gap test compares the extreme speeds: no solution inside the region if
    A1 l1 > B2 l2 or A2 l2 > B1 l1 (A = inf, B = sup).  The mu test needs a
    single field and blocks when mu l1 > E or -mu l2 > E with
    E = sup |grad a| / a^2.
    """
    l1, l2 = fields.lambdas
    c1 = class_constants(fields.a1, region, n)
    c2 = class_constants(fields.a2, region, n)
    lhs1, rhs1 = c1.a_lo * l1, c2.a_hi * l2
    lhs2, rhs2 = c2.a_lo * l2, c1.a_hi * l1
    gap = Verdict(
        lhs1 > rhs1 or lhs2 > rhs2,
        {"A1*l1": lhs1, "B2*l2": rhs1, "A2*l2": lhs2, "B1*l1": rhs2},
    )
    if fields.same_field():
        E = c1.steep
        mu = fields.mu
        mt = Verdict(mu * l1 > E or -mu * l2 > E, {"mu": mu, "E": E, "mu*l1": mu * l1, "-mu*l2": -mu * l2})
    else:
        mt = Verdict(False, {"applicable": False, "reason": "the mu test needs a1 = a2"})
    return gap, mt


# -- curvature


def curvature_check(sol: SolutionRecord, a: FlowSpeed, region=None, n: int = 256) -> tuple[float, float]:
    """(dev_max, bound) for |K - d_nu ln a| on both boundaries.

    K is the left curvature of each boundary and nu the direction of grad U,
    which is the left (upward) normal for both curves.  The bound is
    l_i a |mu| + 2 H A_hi l_max / (A_lo^2 l_min^2) with H the maximum of
    Delta ln a over ``region``.
    """
    pair = sol.pair
    if region is None:
        lo, hi = pair.y_range()
        region = (0.0, pair.period, lo - 0.5, hi + 0.5)
    c = class_constants(a, region, n)
    l1, l2 = sol.lambdas
    lmax, lmin = max(l1, l2), min(l1, l2)
    mu = math.log(l2 / l1)
    H = max(c.log_lap_max, 0.0)
    base = 2.0 * H * c.a_hi * lmax / (c.a_lo**2 * lmin**2)
    dev, bound = 0.0, math.inf
    for lam, arc in ((l1, pair.gamma1), (l2, pair.gamma2)):
        K = discrete_curvature(arc)
        v = arc.vertices
        nrm = _left_normals(arc)
        lx, ly = a.log_grad(v[:, 0], v[:, 1])
        dn = lx * nrm[:, 0] + ly * nrm[:, 1]
        dev = max(dev, float(np.max(np.abs(K - dn))))
        bound = min(bound, float(np.min(lam * a.eval(v[:, 0], v[:, 1]) * abs(mu))) + base)
    return dev, bound


def _left_normals(arc):
    from .reduced import _left_normals as ln

    return ln(arc)


# -- Lipschitz constant of ln |grad U|


def lipschitz_L0(c: ClassConstants) -> float:
    """ln(A_hi/A_lo) + A1/A_lo + 2 A_hi (A_hi A2 + A1^2) / A_lo^4."""
    return math.log(c.a_hi / c.a_lo) + c.d1_max / c.a_lo + 2.0 * c.a_hi * (c.a_hi * c.d2_max + c.d1_max**2) / c.a_lo**4


def measured_log_gradient(U: PotentialField) -> float:
    """max |grad ln |grad U|| over interior nodes whose stencils are all inside."""
    ok, g = interior_gradient(U)
    grid = U.grid
    L = np.log(np.where(ok, g, np.nan))
    lx = (np.roll(L, -1, 1) - np.roll(L, 1, 1)) / (2 * grid.hx)
    ly = np.full_like(L, np.nan)
    ly[1:-1] = (L[2:] - L[:-2]) / (2 * grid.hy)
    m = np.hypot(lx, ly)
    m = m[np.isfinite(m)]
    return float(m.max()) if m.size else 0.0


def _field_on(sol: SolutionRecord, grid: GridSpec | None) -> PotentialField:
    """The solution's potential, re-solved when a different grid is requested."""
    if grid is None and sol.field is not None:
        return sol.field
    if grid is None:
        g = sol.grid
        grid = GridSpec(g.nx, g.ny, ylo=g.ylo, yhi=g.yhi)
    if grid.ylo is None:
        grid = grid.window_for(sol.pair)
    g = Grid.from_spec(grid, sol.pair.period)
    if sol.field is not None and sol.field.grid.key() == g.key():
        return sol.field
    from .potential import solve_potential

    return solve_potential(sol.pair, grid, grid=g)


# -- gradient envelopes


@dataclass
class EnvelopeResult:
    violations: int
    max_excess: float
    samples: int
    C_up: tuple[float, float]
    C_lo: tuple[float, float]


def envelope_check(sol: SolutionRecord, fields: FlowSpeedPair, grid: GridSpec | None = None, slack: float = 0.03) -> EnvelopeResult:
    """Count half-domain nodes outside a_hat e^{-2 C_lo U_i} <= |grad U| <= a_hat e^{2 C_up U_i}.

    a_hat is the log-harmonic extension of lambda_i a_i from the boundary of
    the half domain {U_i < 1/2}.  C_up = sup ln(|grad U| / a) and
    C_lo = sup ln(a / |grad U|), both over the mid-level curve {U = 1/2}.
    """
    U = _field_on(sol, grid)
    g = U.grid
    ok, G = interior_gradient(U)
    mid = level_curve(U, 0.5)
    mv = mid.vertices
    gm = interpolate(PotentialField(U.cut, np.where(ok, G, np.nan), U.values, 0.0), mv[:, 0], mv[:, 1])
    good = np.isfinite(gm)
    X, Y = g.mesh()
    total_v, total_n, excess = 0, 0, 0.0
    cu, cl = [0.0, 0.0], [0.0, 0.0]
    for i in (1, 2):
        lam_a = lambda x, y, i=i: np.log(fields.speed(i, x, y))
        amid = fields.speed(i, mv[good, 0], mv[good, 1])
        cu[i - 1] = float(np.max(np.log(gm[good] / amid)))
        cl[i - 1] = float(np.max(np.log(amid / gm[good])))
        if i == 1:
            W = solve_dirichlet(sol.pair.gamma1, mid, g, lam_a, lam_a)
            Ui = U.U
        else:
            W = solve_dirichlet(mid, sol.pair.gamma2, g, lam_a, lam_a)
            Ui = 1.0 - U.U
        ahat = np.exp(W.U)
        m = ok & np.isfinite(ahat) & (W.cut.cls == 1) & (Ui < 0.5)
        up = ahat[m] * np.exp(2 * cu[i - 1] * Ui[m])
        lo = ahat[m] * np.exp(-2 * cl[i - 1] * Ui[m])
        gv = G[m]
        over = gv / up - 1.0
        under = 1.0 - gv / lo
        bad = (over > slack) | (under > slack)
        total_v += int(np.sum(bad))
        total_n += int(m.sum())
        if gv.size:
            excess = max(excess, float(np.max(np.maximum(over, under))))
    return EnvelopeResult(total_v, excess, total_n, tuple(cu), tuple(cl))


# -- capacity and regularity margin


@dataclass
class CapacityResult:
    cap: float
    cap1: float
    cap2: float
    rho_margin: float
    E_gamma: float
    in_R: bool
    margin_ok: bool
    margin_alt: bool

    @property
    def cap_mismatch(self) -> float:
        return abs(self.cap1 - self.cap2) / max(abs(self.cap1), 1e-300)


def _line_integral(arc, f) -> float:
    c = arc.closed()
    mid = 0.5 * (c[1:] + c[:-1])
    ds = np.hypot(*np.diff(c, axis=0).T)
    return float(np.sum(f(mid[:, 0], mid[:, 1]) * ds))


def capacity(pair: ArcPair, fields: FlowSpeedPair) -> tuple[float, float]:
    """(lambda1 * int_{gamma1} a1 ds, lambda2 * int_{gamma2} a2 ds)."""
    return (
        _line_integral(pair.gamma1, lambda x, y: fields.speed(1, x, y)),
        _line_integral(pair.gamma2, lambda x, y: fields.speed(2, x, y)),
    )


def capacity_and_margins(sol: SolutionRecord, fields: FlowSpeedPair, rho0: float = 0.1, r0: float = 0.01, grid: GridSpec | None = None) -> CapacityResult:
    """Capacity, the margin pi - cap |mu| - rho0, and the regularity margin E(Gamma).

    E(Gamma) is the infimum over boundary samples of |grad W| / |grad U| where
    Delta W = Delta ln a with W = 0 on both curves.
    """
    pair = sol.pair
    cap1, cap2 = capacity(pair, fields)
    mu = fields.mu
    a = fields.a1
    U = _field_on(sol, grid)
    g = U.grid
    W = solve_dirichlet(pair.gamma1, pair.gamma2, g, 0.0, 0.0, rhs=lambda x, y: a.log_laplacian(x, y), cut=U.cut)
    ratios = []
    for which in (1, 2):
        gw = boundary_normal_derivative(W, which)
        gu = boundary_gradient(U, which)
        n = min(len(gw.values), len(gu.values))
        # both sample sets come from the same crossings, so they align
        ratios.append(gw.values[:n] / gu.values[:n])
    E = float(min(r.min() for r in ratios))
    rho_margin = math.pi - cap1 * abs(mu) - rho0
    return CapacityResult(
        cap=cap1,
        cap1=cap1,
        cap2=cap2,
        rho_margin=rho_margin,
        E_gamma=E,
        in_R=bool(rho_margin >= 0),
        margin_ok=bool(E > r0 + math.sqrt(mu * mu + 1) - 1),
        margin_alt=bool(E > mu * mu / (abs(mu) + 2)),
    )


# -- gradient bounds, separation, level lengths


def gradient_bounds(sol: SolutionRecord, fields: FlowSpeedPair, eps: float, region=None) -> dict:
    """Violations of |grad U| <= 2 A_hi off the eps-strips and of the boundary floor."""
    U = sol.field
    pair = sol.pair
    if region is None:
        g = U.grid
        region = (0.0, pair.period, g.ylo, g.yhi)
    c = joint_constants(fields, region)
    ok, G = interior_gradient(U)
    strip = ok & (U.U > eps) & (U.U < 1 - eps)
    cap = 2.0 * c.a_hi
    n_up = int(np.sum(G[strip] > cap))
    # lambda-scaled constants, so the lower floor carries lambda_min implicitly
    floor = 0.5 * c.a_lo / (2.0 * math.log(8.0 * c.a_hi / c.a_lo))
    n_lo = 0
    gmin = math.inf
    for which in (1, 2):
        v = boundary_gradient(U, which).values
        n_lo += int(np.sum(v < floor))
        gmin = min(gmin, float(v.min()))
    gmax = float(np.max(G[strip])) if strip.any() else 0.0
    return {"upper_bound": cap, "max_interior": gmax, "upper_violations": n_up, "floor": floor, "min_boundary": gmin, "floor_violations": n_lo}


def separation_bound(fields: FlowSpeedPair, eps: float, h: float, region) -> float:
    """(1 - 2 eps) / (2 lambda_max A_hi) - 2 h."""
    c1, c2 = fields.constants(region)
    # constants are lambda-scaled already
    a_hi = max(c1.a_hi, c2.a_hi)
    return (1.0 - 2.0 * eps) / (2.0 * a_hi) - 2.0 * h


def level_length_convexity(U: PotentialField, pairs=((0.05, 0.25), (0.1, 0.3), (0.02, 0.5)), slack: float = 0.02) -> dict:
    """Check ||level eps|| <= (1 - eps/h) ||Gamma|| + (eps/h) ||level h|| (+ slack) on both sides."""
    lower, upper = U.cut.lower, U.cut.upper
    viol, worst = 0, -math.inf
    for e, h in pairs:
        if not 0 < e < h <= 0.5:
            raise ValueError("need 0 < eps < h <= 1/2")
        for base, le, lh in (
            (lower, level_curve(U, e), level_curve(U, h)),
            (upper, level_curve(U, 1 - e), level_curve(U, 1 - h)),
        ):
            lhs = arc_length(le)
            rhs = (1 - e / h) * arc_length(base) + (e / h) * arc_length(lh)
            rel = lhs / rhs - 1.0
            worst = max(worst, rel)
            viol += int(rel > slack)
    return {"violations": viol, "worst_relative_excess": worst}


# -- uniqueness


@dataclass
class UniquenessResult:
    max_distance: float
    common_curve: bool
    solutions: list = dc_field(default_factory=list, repr=False)


def uniqueness_probe(a: FlowSpeed, brackets, grid: GridSpec, eps_schedule=(0.08, 0.04, 0.02, 0.01), lambdas=(1.0, 1.0), **kw) -> UniquenessResult:
    """Solve from several brackets and report the largest pairwise Hausdorff distance.

    Needs a strictly log-subharmonic field on the working window and stream
    beds that share a common periodic curve.
    """
    fields = FlowSpeedPair(a, a, *lambdas)
    spec = grid if grid.ylo is not None else grid.window_for(*[p for br in brackets for p in br])
    region = (0.0, a.period, spec.ylo, spec.yhi)
    H = class_constants(a, region).log_lap_min
    if not H > 0:
        raise PreconditionFailed(f"field is not strictly log-subharmonic on the window (min Delta ln a = {H:.3g})")
    sols = [solve_bernoulli(lo, up, fields, spec, eps_schedule, **kw) for lo, up in brackets]
    for i in range(len(sols)):
        for j in range(len(sols)):
            if i != j and compare(sols[i].pair.gamma1, sols[j].pair.gamma2) is not Ordering.StrictLess:
                raise CommonCurveMissing("stream beds of two solutions do not overlap in a periodic strip")
    d = 0.0
    for i in range(len(sols)):
        for j in range(i + 1, len(sols)):
            d = max(d, pair_hausdorff(sols[i].pair, sols[j].pair))
    return UniquenessResult(d, True, sols)


# -- report


@dataclass
class DiagnosticsReport:
    nonexistence_gap: dict
    nonexistence_mu: dict
    curvature_dev_max: float
    curvature_bound: float
    lipschitz_L0: float
    measured_log_gradient: float
    envelope_violations: int
    envelope_max_excess: float
    capacity: float
    capacity_gamma2: float
    rho_margin: float
    regularity_E: float
    in_R: bool
    margin_ok: bool
    margin_alt: bool
    C_i_constants: tuple
    C_i_lower_constants: tuple

    def to_json(self) -> dict:
        d = asdict(self)
        d["C_i_constants"] = list(self.C_i_constants)
        d["C_i_lower_constants"] = list(self.C_i_lower_constants)
        return d


def diagnose(sol: SolutionRecord, fields: FlowSpeedPair, region=None, rho0: float = 0.1, r0: float = 0.01) -> DiagnosticsReport:
    if region is None:
        g = sol.field.grid
        region = (0.0, sol.pair.period, g.ylo, g.yhi)
    gap, mt = screen_nonexistence(fields, region)
    dev, bound = curvature_check(sol, fields.a1, region)
    L0 = lipschitz_L0(joint_constants(fields, region))
    env = envelope_check(sol, fields)
    cap = capacity_and_margins(sol, fields, rho0, r0)
    return DiagnosticsReport(
        nonexistence_gap=gap.to_json(),
        nonexistence_mu=mt.to_json(),
        curvature_dev_max=dev,
        curvature_bound=bound,
        lipschitz_L0=L0,
        measured_log_gradient=measured_log_gradient(sol.field),
        envelope_violations=env.violations,
        envelope_max_excess=env.max_excess,
        capacity=cap.cap1,
        capacity_gamma2=cap.cap2,
        rho_margin=cap.rho_margin,
        regularity_E=cap.E_gamma,
        in_R=cap.in_R,
        margin_ok=cap.margin_ok,
        margin_alt=cap.margin_alt,
        C_i_constants=env.C_up,
        C_i_lower_constants=env.C_lo,
    )
