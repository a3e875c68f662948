"""Brackets, monotone operator iteration and the eps -> 0 continuation.

A pair is a strict lower solution when |grad U| < lambda_1 a_1 on the lower
boundary and |grad U| > lambda_2 a_2 on the upper one; an upper solution has
both inequalities reversed.  Starting from a lower solution, T_eps^- produces
an increasing sequence of pairs that stalls at a fixed point.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .errors import InvalidArc, InvalidBracket, MonotonicityViolation, NoConvergence, PreconditionFailed
from .field import FlowSpeedPair, epsilon0
from .geom import ArcPair, Ordering, PeriodicArc, clearance, compare, distances_to_arc, pair_hausdorff, resample, write_arc_csv
from .potential import Grid, GridSpec, PotentialField, boundary_gradient, level_curve, level_offset, solve_potential
from .trial_ops import MINUS, PLUS, apply_T_with_potential

log = logging.getLogger(__name__)

TOL_BG = 1e-3


# -- brackets


@dataclass
class BracketReport:
    is_strict_lower: bool
    is_strict_upper: bool
    margin_lo: float
    margin_hi: float
    samples: dict  # per boundary: points, |grad U|, lambda*a
    tol_bg: float = TOL_BG

    @property
    def role(self) -> str | None:
        if self.is_strict_lower:
            return "lower"
        if self.is_strict_upper:
            return "upper"
        return None


def _fixed_grid(spec: GridSpec, period: float, *pairs: ArcPair) -> Grid:
    if spec.ylo is None:
        spec = spec.window_for(*pairs)
    return Grid.from_spec(spec, period)


def boundary_residuals(U: PotentialField, fields: FlowSpeedPair) -> dict:
    """Boundary samples of |grad U| and lambda_i a_i on both curves."""
    out = {}
    for i in (1, 2):
        bs = boundary_gradient(U, i)
        target = fields.speed(i, bs.points[:, 0], bs.points[:, 1])
        out[i] = {"points": bs.points, "grad": bs.values, "target": target}
    return out


def bracket_from_samples(samples: dict, tol_bg: float = TOL_BG) -> BracketReport:
    s1, s2 = samples[1], samples[2]
    lo = min(float(np.min(s1["target"] - s1["grad"])), float(np.min(s2["grad"] - s2["target"])))
    hi = min(float(np.min(s1["grad"] - s1["target"])), float(np.min(s2["target"] - s2["grad"])))
    m_lo, m_hi = lo - tol_bg, hi - tol_bg
    return BracketReport(m_lo > 0, m_hi > 0, m_lo, m_hi, samples, tol_bg)


def verify_bracket(pair: ArcPair, fields: FlowSpeedPair, grid: GridSpec, tol_bg: float = TOL_BG) -> BracketReport:
    """Pointwise sub/super-solution test with a grid-error allowance ``tol_bg``."""
    g = grid if isinstance(grid, Grid) else _fixed_grid(grid, pair.period, pair)
    spec = grid if isinstance(grid, GridSpec) else GridSpec(g.nx, g.ny)
    U = solve_potential(pair, spec, grid=g)
    return bracket_from_samples(boundary_residuals(U, fields), tol_bg)


def _distance_conditions(pair: ArcPair, U: PotentialField, fields: FlowSpeedPair, eps: float, role: str) -> bool:
    """The four weighted-distance inequalities that define eps_1, for one bracket."""
    slack = 1e-9 * max(eps, 1e-300)
    ok = True
    for i, arc in ((1, pair.gamma1), (2, pair.gamma2)):
        lev = level_curve(U, eps if i == 1 else 1.0 - eps)
        p = arc.vertices
        w = fields.speed(i, p[:, 0], p[:, 1]) * distances_to_arc(p, lev)
        # lower: >= on gamma1, <= on gamma2; upper: the reverse
        need_ge = (i == 1) == (role == "lower")
        ok &= bool(np.all(w >= eps - slack)) if need_ge else bool(np.all(w <= eps + slack))
    return ok


def epsilon1(lower: ArcPair, upper: ArcPair, fields: FlowSpeedPair, grid: GridSpec, levels: int = 24) -> float:
    """Largest eps = eps0 / 2^k (k >= 1) at which the bracket conditions hold.

    Returns 0.0 (and logs a warning) when no level on the search grid works.
    """
    rep_l = verify_bracket(lower, fields, _bracket_spec(grid, lower, upper))
    rep_u = verify_bracket(upper, fields, _bracket_spec(grid, lower, upper))
    _require_bracket(lower, upper, rep_l, rep_u)
    g = _fixed_grid(grid, lower.period, lower, upper)
    spec = GridSpec(g.nx, g.ny, tol_pde=grid.tol_pde)
    Ul = solve_potential(lower, spec, grid=g)
    Uu = solve_potential(upper, spec, grid=g)
    e0 = epsilon0(fields, (0.0, lower.period, g.ylo, g.yhi))
    for k in range(1, levels + 1):
        eps = e0 / 2**k
        try:
            if _distance_conditions(lower, Ul, fields, eps, "lower") and _distance_conditions(upper, Uu, fields, eps, "upper"):
                return eps
        except Exception as exc:  # level curve not resolvable at this eps
            log.debug("eps1 search: eps=%g skipped (%s)", eps, exc)
    log.warning("no admissible eps found for this bracket")
    return 0.0


def _bracket_spec(grid: GridSpec, *pairs: ArcPair) -> GridSpec:
    return grid if grid.ylo is not None else grid.window_for(*pairs)


def _require_bracket(lower: ArcPair, upper: ArcPair, rep_l: BracketReport, rep_u: BracketReport):
    if not rep_l.is_strict_lower:
        raise InvalidBracket(f"lower pair is not a strict lower solution (margin {rep_l.margin_lo:.3g})")
    if not rep_u.is_strict_upper:
        raise InvalidBracket(f"upper pair is not a strict upper solution (margin {rep_u.margin_hi:.3g})")
    if compare(lower.gamma1, upper.gamma1) is not Ordering.StrictLess or compare(lower.gamma2, upper.gamma2) is not Ordering.StrictLess:
        raise InvalidBracket("lower bracket is not strictly below the upper bracket")


# -- monotone iteration


@dataclass
class TraceStep:
    k: int
    pair: ArcPair
    step: float
    flag: tuple[Ordering, Ordering] | None
    residual: float = math.nan
    accelerated: bool = False


@dataclass
class IterationTrace:
    steps: list[TraceStep]
    eps: float
    sign: str
    converged: bool
    evaluations: int = 0
    rate: float = math.nan
    field: PotentialField | None = dc_field(default=None, repr=False)

    @property
    def final(self) -> ArcPair:
        return self.steps[-1].pair

    def pairs(self) -> list[ArcPair]:
        return [s.pair for s in self.steps]


def mean_height(arc: PeriodicArc) -> float:
    """(1/P) times the integral of y dx over one period (the average height)."""
    c = arc.closed()
    return float(np.sum(0.5 * (c[1:, 1] + c[:-1, 1]) * np.diff(c[:, 0])) / arc.period)


def _residual_max(U: PotentialField, fields: FlowSpeedPair) -> float:
    s = boundary_residuals(U, fields)
    return max(float(np.max(np.abs(s[i]["grad"] - s[i]["target"]))) for i in (1, 2))


def _direction(sign: str, role: str | None) -> int:
    if role is None:
        role = "lower" if sign == MINUS else "upper"
    if role not in ("lower", "upper"):
        raise ValueError("role must be 'lower' or 'upper'")
    return 1 if role == "lower" else -1


def _moved(new: ArcPair, old: ArcPair, direction: int) -> float:
    """Worst penetration of ``new`` against ``old`` in the direction of travel (<= 0 is fine)."""
    if direction > 0:
        c = min(clearance(old.gamma1, new.gamma1), clearance(old.gamma2, new.gamma2))
    else:
        c = min(clearance(new.gamma1, old.gamma1), clearance(new.gamma2, old.gamma2))
    return -c


def _flags(new: ArcPair, old: ArcPair, tol: float) -> tuple[Ordering, Ordering]:
    return compare(new.gamma1, old.gamma1, tol), compare(new.gamma2, old.gamma2, tol)


class _Modes:
    """Low Fourier modes of the curve heights, the coordinates the accelerator works in.

    Graph-like curves are sampled at ``m`` uniform abscissae and keep modes
    0..k; any other curve is represented by its mean height alone.
    """

    def __init__(self, pair: ArcPair, k: int = 8, m: int = 64):
        self.period = pair.period
        self.m = m
        self.x = pair.period * np.arange(m) / m
        self.k = [k if g.is_graph() else 0 for g in (pair.gamma1, pair.gamma2)]

    def coords(self, p: ArcPair) -> np.ndarray:
        out = []
        for g, k in zip((p.gamma1, p.gamma2), self.k):
            if k == 0 or not g.is_graph():
                out.append([mean_height(g)] + [0.0] * (2 * k))
                continue
            c = np.fft.rfft(g.y_at(self.x)) / self.m
            out.append(np.concatenate([[c[0].real], 2 * c[1 : k + 1].real, 2 * c[1 : k + 1].imag]))
        return np.concatenate(out)

    def _split(self, z: np.ndarray):
        n1 = 2 * self.k[0] + 1
        return z[:n1], z[n1:]

    def heights(self, z: np.ndarray, x) -> tuple[np.ndarray, np.ndarray]:
        """The two height corrections encoded by ``z``, evaluated at ``x`` (one array per curve)."""
        res = []
        for part, k, xx in zip(self._split(z), self.k, x):
            th = 2 * np.pi * np.asarray(xx)[:, None] / self.period * np.arange(1, k + 1)
            v = np.full(len(xx), part[0])
            if k:
                v = v + np.cos(th) @ part[1 : k + 1] - np.sin(th) @ part[k + 1 :]
            res.append(v)
        return res[0], res[1]

    def sup(self, z: np.ndarray) -> float:
        a, b = self.heights(z, (self.x, self.x))
        return float(max(np.abs(a).max(), np.abs(b).max()))

    def apply(self, p: ArcPair, z: np.ndarray) -> ArcPair | None:
        d1, d2 = self.heights(z, (p.gamma1.vertices[:, 0], p.gamma2.vertices[:, 0]))
        try:
            g1 = PeriodicArc(p.gamma1.vertices + np.column_stack([np.zeros_like(d1), d1]), self.period)
            g2 = PeriodicArc(p.gamma2.vertices + np.column_stack([np.zeros_like(d2), d2]), self.period)
            return ArcPair(g1, g2)
        except InvalidArc:
            return None


class _Accelerator:
    """Anderson mixing on the low modes of the curve heights.

    The slow modes of the iteration are smooth vertical motions of the
    curves: near-rigid shifts contract at a rate close to 1 - c*eps, long
    waves only slightly faster.  Mixing the last few residuals removes most
    of the 1/eps iteration count.  Every proposal is checked by the next
    operator application and discarded if it overshoots.
    """

    def __init__(self, modes: _Modes, depth: int = 6, max_gain: float = 200.0, rho_floor: float = 0.0):
        self.modes = modes
        self.rho_floor = rho_floor
        self.depth = depth
        self.max_gain = max_gain
        self.damping = 1.0
        self.z: list[np.ndarray] = []
        self.r: list[np.ndarray] = []
        self.rho = math.nan
        self.cooldown = 0
        self.delta: np.ndarray | None = None
        self.unexplained: np.ndarray | None = None

    def record(self, z: np.ndarray, r: np.ndarray):
        self.z.append(z)
        self.r.append(r)
        del self.z[: -self.depth - 1], self.r[: -self.depth - 1]
        self.delta = self.unexplained = None
        if len(self.z) < 2:
            return
        dz = self.z[-1] - self.z[-2]
        dr = self.r[-1] - self.r[-2]
        den = float(dz @ dz)
        if den > 0:
            # slowest rate seen along the latest move
            rho = 1.0 + float(dr @ dz) / den
            if 0.0 < rho < 1.0:
                self.rho = rho if math.isnan(self.rho) else max(0.5 * (self.rho + rho), rho)
        dZ = np.diff(np.array(self.z), axis=0).T
        dR = np.diff(np.array(self.r), axis=0).T
        gamma, *_ = np.linalg.lstsq(dR, r, rcond=1e-8)
        self.unexplained = r - dR @ gamma
        # move from T(z) = z + r to the mixed iterate
        self.delta = -(dZ + dR) @ gamma

    def reject(self):
        self.damping *= 0.5
        self.cooldown = 2
        self.z.clear()
        self.r.clear()
        self.delta = self.unexplained = None

    def distance_estimate(self) -> float:
        """Estimated distance from T(z) to the fixed point, within the modal subspace."""
        if self.delta is None or math.isnan(self.rho):
            return math.inf
        rho = max(self.rho, self.rho_floor)
        gain = min(rho / (1.0 - rho), self.max_gain)
        return self.modes.sup(self.delta) + gain * self.modes.sup(self.unexplained)

    def shift(self) -> np.ndarray | None:
        if self.cooldown > 0:
            self.cooldown -= 1
            return None
        if self.delta is None:
            return None
        s = self.damping * self.delta
        lim = self.max_gain * self.modes.sup(self.r[-1])
        size = self.modes.sup(s)
        if size == 0.0:
            return None
        if size > lim:
            s = s * (lim / size)
        return s


def _room_ok(p: ArcPair, bound: ArcPair, old: ArcPair, direction: int, slack: float) -> bool:
    """``p`` stays on the near side of ``bound``, keeping some of the room ``old`` had."""
    for a, b, o in ((p.gamma1, bound.gamma1, old.gamma1), (p.gamma2, bound.gamma2, old.gamma2)):
        room = clearance(o, b) if direction > 0 else clearance(b, o)
        left = clearance(a, b) if direction > 0 else clearance(b, a)
        if left < min(slack, 0.1 * max(room, 0.0)):
            return False
    return True


def monotone_iterate(
    start: ArcPair,
    eps: float,
    sign: str,
    fields: FlowSpeedPair,
    grid: GridSpec,
    max_iter: int = 400,
    tol_fp: float | None = None,
    *,
    role: str | None = None,
    bound: ArcPair | None = None,
    accelerate: bool = True,
    n_out: int | None = None,
    trace_dir: str | Path | None = None,
    rho_hint: float = 0.0,
) -> IterationTrace:
    """Iterate T_eps^sign from an operator lower (or upper) solution.

    Stops when the estimated distance to the fixed point drops below
    ``tol_fp``.  Within the low height modes the estimate comes from the
    secant model built by the accelerator; the rest of the step is taken as
    it is.  ``bound`` (the opposite bracket) caps extrapolated moves.
    ``rho_hint`` is a lower bound for the contraction rate used in that
    estimate; early secant rates tend to be optimistic.
    """
    if sign not in (PLUS, MINUS):
        raise ValueError(f"sign must be 'plus' or 'minus', got {sign!r}")
    direction = _direction(sign, role)
    g = grid if isinstance(grid, Grid) else _fixed_grid(grid, start.period, *(p for p in (start, bound) if p is not None))
    h = g.h
    if tol_fp is None:
        tol_fp = 0.02 * max(h, eps / 20.0)
    n_out = n_out or g.nx
    slack = h
    modes = _Modes(start)
    acc = _Accelerator(modes, rho_floor=rho_hint) if accelerate else None

    cur = start
    Tcur, Ucur = apply_T_with_potential(cur, eps, sign, fields, g, n_out)
    evals = 1
    bad = _moved(Tcur, cur, direction)
    if bad > slack:
        raise PreconditionFailed(
            f"start is not an operator {'lower' if direction > 0 else 'upper'} solution at eps={eps:g} (moves back by {bad:.3g})"
        )
    steps = [TraceStep(0, start, 0.0, None, _residual_max(Ucur, fields))]
    plain_prev: ArcPair | None = None  # T of the previous accepted iterate
    was_acc = False
    converged = False
    for k in range(1, max_iter + 1):
        step = pair_hausdorff(Tcur, cur)
        z = modes.coords(cur)
        r = modes.coords(Tcur) - z
        low = modes.sup(r)
        if acc is not None:
            acc.record(z, r)
        flag = _flags(Tcur, cur, 1e-9 * cur.period)
        steps.append(TraceStep(k, Tcur, step, flag))
        # contraction-aware stopping rule
        if acc is not None:
            est = acc.distance_estimate() + max(step - low, 0.0)
        else:
            rho = _ratio_rate(steps)
            rho = max(rho, rho_hint) if not math.isnan(rho) else rho
            est = step * rho / (1.0 - rho) if not math.isnan(rho) else math.inf
        log.debug("k=%d step=%.3g low=%.3g est=%.3g rho=%.4g acc=%s", k, step, low, est, acc.rho if acc else math.nan, was_acc)
        # a step far below tol_fp is final even at the largest admitted gain
        if step <= 1e-12 or step * 200 <= tol_fp or est <= tol_fp:
            converged = True
            break
        # next iterate: plain image, or a mixed correction of it
        nxt, was_acc = Tcur, False
        if acc is not None:
            s = acc.shift()
            while s is not None:
                cand = modes.apply(Tcur, s)
                if cand is not None and (bound is None or _room_ok(cand, bound, Tcur, direction, slack)):
                    nxt, was_acc = cand, True
                    break
                s = 0.5 * s if modes.sup(s) > slack else None
        plain_prev = Tcur
        cur = nxt
        Tcur, Ucur = apply_T_with_potential(cur, eps, sign, fields, g, n_out)
        evals += 1
        bad = _moved(Tcur, cur, direction)
        # a mixed step must also shrink the low-mode residual
        worse = was_acc and modes.sup(modes.coords(Tcur) - modes.coords(cur)) > low
        if bad > slack or worse:
            if was_acc:
                # the extrapolation overshot the fixed point: fall back to the plain image
                acc.reject()
                cur = plain_prev
                Tcur, Ucur = apply_T_with_potential(cur, eps, sign, fields, g, n_out)
                evals += 1
                bad = _moved(Tcur, cur, direction)
            if bad > slack:
                raise MonotonicityViolation(f"iterate {k + 1} moves against the monotone direction by {bad:.3g} (slack {slack:.3g})")
        if was_acc:
            steps[-1] = TraceStep(k, cur, step, flag, accelerated=True)
        steps[-1].residual = _residual_max(Ucur, fields)
    trace = IterationTrace(steps, eps, sign, converged, evals, acc.rho if acc else _ratio_rate(steps), Ucur)
    if trace_dir is not None:
        write_trace(trace, trace_dir)
    if not converged:
        raise NoConvergence(f"no fixed point within {max_iter} iterations at eps={eps:g}", last=trace)
    return trace


def _ratio_rate(steps: list[TraceStep]) -> float:
    """Contraction rate from the last two plain steps; NaN until measurable."""
    if len(steps) < 3 or steps[-2].step <= 0:
        return math.nan
    return min(max(steps[-1].step / steps[-2].step, 0.0), 0.999)


def write_trace(trace: IterationTrace, out_dir) -> None:
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    tag = f"eps{trace.eps:.6g}_{trace.sign}"
    with open(d / "trace.csv", "a", newline="") as fh:
        w = csv.writer(fh)
        if fh.tell() == 0:
            w.writerow(["eps", "sign", "iter", "step", "residual", "accelerated"])
        for s in trace.steps:
            w.writerow([f"{trace.eps:.6g}", trace.sign, s.k, f"{s.step:.9g}", f"{s.residual:.9g}", int(s.accelerated)])
    for s in trace.steps:
        write_arc_csv(d / f"{tag}_iter{s.k:04d}_gamma1.csv", s.pair.gamma1)
        write_arc_csv(d / f"{tag}_iter{s.k:04d}_gamma2.csv", s.pair.gamma2)


# -- eps continuation


@dataclass
class SolutionRecord:
    pair: ArcPair
    eps_schedule: list[float]
    residual_max: float
    residual_mean: float
    lambdas: tuple[float, float]
    diagnostics: dict = dc_field(default_factory=dict)
    residual_history: list[float] = dc_field(default_factory=list)
    iterations: list[int] = dc_field(default_factory=list)
    converged: bool = True
    seconds: float = 0.0
    grid: Grid | None = dc_field(default=None, repr=False)
    field: PotentialField | None = dc_field(default=None, repr=False)
    traces: list[IterationTrace] = dc_field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        return {
            "eps_schedule": list(self.eps_schedule),
            "residual_max": self.residual_max,
            "residual_mean": self.residual_mean,
            "lambda": list(self.lambdas),
            "residual_history": list(self.residual_history),
            "iterations": list(self.iterations),
            "converged": self.converged,
            "seconds": self.seconds,
            "gamma1": self.pair.gamma1.vertices.tolist(),
            "gamma2": self.pair.gamma2.vertices.tolist(),
            "period": self.pair.period,
            "diagnostics": self.diagnostics,
        }


def evaluate_solution(pair: ArcPair, fields: FlowSpeedPair, grid: Grid, tol: float = 1e-8):
    """Solve on ``pair`` and return (field, residual_max, residual_mean)."""
    U = solve_potential(pair, GridSpec(grid.nx, grid.ny, tol_pde=tol), grid=grid)
    s = boundary_residuals(U, fields)
    r = np.concatenate([np.abs(s[i]["grad"] - s[i]["target"]) for i in (1, 2)])
    return U, float(r.max()), float(r.mean())


def _reseed(seed: ArcPair, U: PotentialField, direction: int, h: float, bracket: ArcPair, k: int) -> ArcPair:
    """Move a seed one level-offset step further into its bracket role."""
    bs1, bs2 = boundary_gradient(U, 1), boundary_gradient(U, 2)
    d1 = (2**k) * h * float(np.median(bs1.values))
    d2 = (2**k) * h * float(np.median(bs2.values))
    # a lower seed moves down, an upper seed moves up
    g1 = level_offset(U, 1, -direction * d1)
    g2 = level_offset(U, 2, -direction * d2)
    cand = ArcPair(resample(g1, seed.gamma1.n), resample(g2, seed.gamma2.n))
    ok = clearance(bracket.gamma1, cand.gamma1) >= 0 and clearance(bracket.gamma2, cand.gamma2) >= 0
    if direction < 0:
        ok = clearance(cand.gamma1, bracket.gamma1) >= 0 and clearance(cand.gamma2, bracket.gamma2) >= 0
    return cand if ok else bracket


def solve_bernoulli(
    lower: ArcPair,
    upper: ArcPair,
    fields: FlowSpeedPair,
    grid: GridSpec,
    eps_schedule=(0.08, 0.04, 0.02, 0.01),
    tol_fp: float | None = None,
    *,
    side: str = "lower",
    max_iter: int = 400,
    check_eps1: bool = True,
    trace_dir: str | Path | None = None,
    tol_bg: float = TOL_BG,
) -> SolutionRecord:
    """Fixed points of T_eps for a decreasing eps schedule, warm-started.

    ``side`` selects the bracket the iteration starts from: "lower" runs
    T^- upwards from ``lower``, "upper" runs T^+ downwards from ``upper``.
    """
    t0 = time.perf_counter()
    sched = [float(e) for e in eps_schedule]
    if not sched or any(b >= a for a, b in zip(sched, sched[1:])) or sched[-1] <= 0:
        raise ValueError("eps_schedule must be positive and strictly decreasing")
    spec = _bracket_spec(grid, lower, upper)
    g = Grid.from_spec(spec, lower.period)
    rep_l = verify_bracket(lower, fields, g, tol_bg)
    rep_u = verify_bracket(upper, fields, g, tol_bg)
    _require_bracket(lower, upper, rep_l, rep_u)
    if check_eps1:
        e1 = epsilon1(lower, upper, fields, spec)
        if sched[0] > e1:
            raise InvalidBracket(f"first eps {sched[0]:g} exceeds eps_1 = {e1:g} for this bracket")
    if side == "lower":
        sign, direction, bracket, bound = MINUS, 1, lower, upper
    elif side == "upper":
        sign, direction, bracket, bound = PLUS, -1, upper, lower
    else:
        raise ValueError("side must be 'lower' or 'upper'")
    n = g.nx
    seed = ArcPair(resample(bracket.gamma1, n), resample(bracket.gamma2, n))
    traces, hist, iters = [], [], []
    U = None
    hint = 0.0
    for idx, eps in enumerate(sched):
        sub = None if trace_dir is None else Path(trace_dir)
        trace = None
        for attempt in range(6):
            try:
                trace = monotone_iterate(seed, eps, sign, fields, g, max_iter, tol_fp, bound=bound, n_out=n, trace_dir=sub, rho_hint=hint)
                break
            except PreconditionFailed:
                if seed is bracket or U is None:
                    raise
                seed = _reseed(seed, U, direction, g.h, ArcPair(resample(bracket.gamma1, n), resample(bracket.gamma2, n)), attempt)
                log.info("eps=%g: reseeded (attempt %d)", eps, attempt + 1)
        traces.append(trace)
        iters.append(trace.evaluations)
        # the contraction gap 1 - rho shrinks in proportion to eps
        if idx + 1 < len(sched) and 0.0 < trace.rate < 1.0:
            hint = 1.0 - (1.0 - trace.rate) * sched[idx + 1] / eps
        U, rmax, _ = evaluate_solution(trace.final, fields, g, spec.tol_pde)
        hist.append(rmax)
        log.info("eps=%g: %d evaluations, residual %.3g", eps, trace.evaluations, rmax)
        seed = trace.final
    final = traces[-1].final
    U, rmax, rmean = evaluate_solution(final, fields, g, spec.tol_pde)
    return SolutionRecord(
        pair=final,
        eps_schedule=sched,
        residual_max=rmax,
        residual_mean=rmean,
        lambdas=fields.lambdas,
        residual_history=hist,
        iterations=iters,
        converged=all(t.converged for t in traces),
        seconds=time.perf_counter() - t0,
        grid=g,
        field=U,
        traces=traces,
    )
