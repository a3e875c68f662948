"""Lambda-parametrised solution families by continuation in mu = ln(lambda2 / lambda1).

Along the family lambda = (e^{mu/2}, e^{-mu/2}), so lambda1 * lambda2 = 1.  Each
step builds a barrier pair from level offsets of the previous solution,
checks it with :func:`verify_bracket` and re-solves.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .errors import BernoulliError, GapUnresolved, LevelOutOfWindow, SeedNotAtMuZero, SolveFailed
from .field import FlowSpeed, FlowSpeedPair
from .geom import ArcPair, Ordering, compare, pair_hausdorff, pair_le, write_arc_csv
from .iterate import SolutionRecord, solve_bernoulli, verify_bracket
from .potential import Grid, GridSpec, level_offset, solve_potential
from .verify import capacity, screen_nonexistence

log = logging.getLogger(__name__)

MAX_DELTA = 0.2
TERMINATIONS = ("boundary-contact", "nonexistence-screen", "step-failure", "range-exhausted")


def lambdas_for(mu: float) -> tuple[float, float]:
    return math.exp(0.5 * mu), math.exp(-0.5 * mu)


def offset_levels(sol: SolutionRecord, delta: tuple[float, float], grid: GridSpec | None = None) -> ArcPair:
    """(M1, M2) with M1 = {U = delta1} and M2 = {U = 1 + delta2}.

    Offsets pointing out of the strip continue U linearly along the boundary
    normals.  ``grid`` fixes the window the result must fit in; by default the
    solution's own grid.
    """
    d1, d2 = (float(d) for d in delta)
    if max(abs(d1), abs(d2)) > MAX_DELTA:
        raise LevelOutOfWindow(f"|delta| must not exceed {MAX_DELTA}")
    U = sol.field
    if U is None or (grid is not None and grid.ylo is not None and (grid.ylo, grid.yhi) != (U.grid.ylo, U.grid.yhi)):
        spec = grid if grid is not None else GridSpec()
        if spec.ylo is None:
            spec = spec.window_for(sol.pair)
        U = solve_potential(sol.pair, spec, grid=Grid.from_spec(spec, sol.pair.period))
    g = U.grid
    try:
        m1 = level_offset(U, 1, d1)
        m2 = level_offset(U, 2, d2)
        out = ArcPair(m1, m2)
    except BernoulliError as exc:
        raise LevelOutOfWindow(f"offset level curve unavailable: {exc}") from exc
    except ValueError as exc:
        raise LevelOutOfWindow(f"offset curves are not an ordered pair: {exc}") from exc
    lo, hi = out.y_range()
    if lo <= g.ylo or hi >= g.yhi:
        raise LevelOutOfWindow(f"offset pair spans [{lo:.3g}, {hi:.3g}], outside the window [{g.ylo:.3g}, {g.yhi:.3g}]")
    return out


@dataclass
class FamilyPoint:
    t: float
    mu: float
    lambdas: tuple[float, float]
    solution: SolutionRecord = dc_field(repr=False)

    def __post_init__(self):
        if abs(self.lambdas[0] * self.lambdas[1] - 1.0) > 1e-12:
            raise ValueError("family lambdas must multiply to 1")

    @property
    def pair(self) -> ArcPair:
        return self.solution.pair


@dataclass
class Family:
    points: list[FamilyPoint]
    termination: dict  # direction ("up" / "down") -> reason
    ordering_violations: int = 0
    L_fam: float = 0.0

    def mus(self) -> list[float]:
        return [p.mu for p in self.points]

    def at(self, mu: float, tol: float = 1e-9) -> FamilyPoint | None:
        for p in self.points:
            if abs(p.mu - mu) <= tol:
                return p
        return None


def _direction_vector(mu: float) -> np.ndarray:
    """Positive offset direction, weighted towards the curve whose lambda grows."""
    v = np.array([1.0 + max(mu, 0.0), 1.0 + max(-mu, 0.0)])
    return v / np.linalg.norm(v)


def _deltas_for(step: float) -> tuple[float, ...]:
    # a little over the expected offset per unit of mu, then the largest allowed
    d = min(MAX_DELTA, 0.02 + 3.0 * abs(step))
    return (d,) if d >= MAX_DELTA else (d, MAX_DELTA)


def _barriers(prev: SolutionRecord, mu: float, delta: float):
    v = _direction_vector(mu) * delta
    lower = offset_levels(prev, (-v[0], -v[1]))
    upper = offset_levels(prev, (v[0], v[1]))
    return lower, upper


def _verified_barriers(prev: SolutionRecord, mu: float, step: float, fields: FlowSpeedPair, grid: GridSpec):
    for delta in _deltas_for(step):
        lower, upper = _barriers(prev, mu, delta)
        if verify_bracket(lower, fields, grid).is_strict_lower and verify_bracket(upper, fields, grid).is_strict_upper:
            return lower, upper
    return None


def _march(seed: SolutionRecord, targets: list[float], a: FlowSpeed, grid: GridSpec, eps_schedule, region, max_halvings: int, solve_kw: dict):
    """Follow ``targets`` (moving away from 0) and return (points, reason)."""
    pts: list[tuple[float, SolutionRecord]] = []
    prev, mu_prev = seed, 0.0
    for target in targets:
        mu = target
        while True:
            fields = FlowSpeedPair(a, a, *lambdas_for(mu))
            gap, mt = screen_nonexistence(fields, region)
            if gap.blocked or mt.blocked:
                log.info("mu=%g refused by the nonexistence screen", mu)
                return pts, "nonexistence-screen"
            step = mu - mu_prev
            sol = None
            for _ in range(max_halvings + 1):
                try:
                    br = _verified_barriers(prev, mu, step, fields, grid)
                    if br is not None:
                        sol = solve_bernoulli(br[0], br[1], fields, grid, eps_schedule, **solve_kw)
                        break
                except (GapUnresolved, SolveFailed) as exc:
                    log.info("mu=%g: window contact (%s)", mu, exc)
                    return pts, "boundary-contact"
                except LevelOutOfWindow as exc:
                    log.info("mu=%g: %s", mu, exc)
                    return pts, "boundary-contact"
                except BernoulliError as exc:
                    log.info("mu=%g: solve failed (%s)", mu, exc)
                step *= 0.5
                mu = mu_prev + step
                fields = FlowSpeedPair(a, a, *lambdas_for(mu))
            if sol is None:
                return pts, "step-failure"
            pts.append((mu, sol))
            prev, mu_prev = sol, mu
            if math.isclose(mu, target, rel_tol=0, abs_tol=1e-12):
                break
            mu = target
    return pts, "range-exhausted"


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("BERNOULLI_FORGE_THREADS", "1")))
    except ValueError:
        return 1


def sweep(
    seed: SolutionRecord,
    mu_grid,
    a: FlowSpeed,
    grid: GridSpec,
    eps_schedule=(0.08, 0.04, 0.02, 0.01),
    *,
    max_halvings: int = 4,
    region=None,
    **solve_kw,
) -> Family:
    """March from the mu = 0 seed through ``mu_grid`` in both directions.

    A direction stops at the first target refused by the nonexistence screen,
    at the first step whose barriers fail verification after
    ``max_halvings`` halvings, or when the barriers leave the window.
    """
    l1, l2 = seed.lambdas
    if abs(l1 - 1.0) > 1e-12 or abs(l2 - 1.0) > 1e-12:
        raise SeedNotAtMuZero(f"seed solved at lambda = ({l1}, {l2})")
    mus = sorted(float(m) for m in mu_grid)
    if not any(abs(m) < 1e-14 for m in mus):
        raise ValueError("mu_grid must contain 0")
    if grid.ylo is None:
        grid = grid.window_for(seed.pair)
    if region is None:
        region = (0.0, seed.pair.period, grid.ylo, grid.yhi)
    solve_kw.setdefault("check_eps1", False)
    up = [m for m in mus if m > 1e-14]
    down = [m for m in reversed(mus) if m < -1e-14]
    args = (a, grid, eps_schedule, region, max_halvings, solve_kw)
    if _threads() > 1:
        with ThreadPoolExecutor(max_workers=2) as ex:
            fu = ex.submit(_march, seed, up, *args)
            fd = ex.submit(_march, seed, down, *args)
            (pu, ru), (pd, rd) = fu.result(), fd.result()
    else:
        pu, ru = _march(seed, up, *args)
        pd, rd = _march(seed, down, *args)
    seq = list(reversed(pd)) + [(0.0, seed)] + pu
    points = [FamilyPoint(mu, mu, lambdas_for(mu), sol) for mu, sol in seq]
    fam = Family(points, {"up": ru, "down": rd})
    fam.ordering_violations = ordering_violations(fam)
    fam.L_fam = lipschitz_constant(fam)
    return fam


def ordering_violations(fam: Family) -> int:
    """Consecutive members that are not strictly ordered componentwise."""
    bad = 0
    for p, q in zip(fam.points, fam.points[1:]):
        ok = (
            compare(p.pair.gamma1, q.pair.gamma1) is Ordering.StrictLess
            and compare(p.pair.gamma2, q.pair.gamma2) is Ordering.StrictLess
        )
        bad += int(not ok)
    return bad


def lipschitz_constant(fam: Family) -> float:
    """Smallest L with Hausdorff(G(t_k), G(t_k+1)) <= L |mu_k+1 - mu_k| for all k."""
    L = 0.0
    for p, q in zip(fam.points, fam.points[1:]):
        L = max(L, pair_hausdorff(p.pair, q.pair) / abs(q.mu - p.mu))
    return L


@dataclass
class WindowVerdict:
    sandwiched: bool
    alpha: float | None = None
    beta: float | None = None
    distance: float | None = None
    agrees: bool | None = None

    def to_json(self) -> dict:
        return dict(self.__dict__)


def family_uniqueness_window(fam: Family, probe: ArcPair, mu: float, tol_unique: float) -> WindowVerdict:
    """Look for members alpha < mu < beta that sandwich ``probe``; then compare with the member at mu."""
    below = [p for p in fam.points if p.mu < mu and pair_le(p.pair, probe)]
    above = [p for p in fam.points if p.mu > mu and pair_le(probe, p.pair)]
    if not below or not above:
        return WindowVerdict(False)
    member = min(fam.points, key=lambda p: abs(p.mu - mu))
    d = pair_hausdorff(member.pair, probe)
    return WindowVerdict(True, below[-1].mu, above[0].mu, d, d <= tol_unique)


def write_family(fam: Family, out_dir, a: FlowSpeed | None = None) -> Path:
    """family.csv, one curve CSV per member and an SVG overlay."""
    from .plot import write_svg

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "family.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mu", "lambda1", "lambda2", "cap", "residual_max"])
        for k, p in enumerate(fam.points):
            cap = p.solution.diagnostics.get("cap")
            if cap is None and a is not None:
                cap = capacity(p.pair, FlowSpeedPair(a, a, *p.lambdas))[0]
            w.writerow([repr(float(v)) if v is not None else "" for v in (p.t, p.mu, p.lambdas[0], p.lambdas[1], cap, p.solution.residual_max)])
            write_arc_csv(out / f"member_{k:03d}_gamma1.csv", p.pair.gamma1)
            write_arc_csv(out / f"member_{k:03d}_gamma2.csv", p.pair.gamma2)
    arcs = []
    for p in fam.points:
        arcs += [p.pair.gamma1, p.pair.gamma2]
    write_svg(out / "family.svg", arcs, title="solution family")
    return path


def flat_oracle(mu: float, guess=(-0.45, 0.45), tol: float = 1e-13) -> tuple[float, float]:
    """Flat cosh positions: 1/(c2 - c1) = e^{mu/2} cosh c1 = e^{-mu/2} cosh c2, by Newton."""
    l1, l2 = lambdas_for(mu)
    c = np.array(guess, dtype=float)
    for _ in range(100):
        w = c[1] - c[0]
        F = np.array([1 / w - l1 * math.cosh(c[0]), 1 / w - l2 * math.cosh(c[1])])
        J = np.array([[1 / w**2 - l1 * math.sinh(c[0]), -1 / w**2], [1 / w**2, -1 / w**2 - l2 * math.sinh(c[1])]])
        dc = np.linalg.solve(J, -F)
        c += dc
        if np.max(np.abs(dc)) < tol:
            break
    return float(c[0]), float(c[1])
