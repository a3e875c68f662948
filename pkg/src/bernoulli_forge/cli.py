"""Command-line driver: ``bernoulli-forge <command> --config run.toml``.

Exit codes: 0 success, 1 invalid configuration, 2 refused by a nonexistence
screen (or no solution found), 3 numerical failure.
"""

from __future__ import annotations

import os


def _cap_threads() -> None:
    # must run before numpy loads its BLAS
    n = os.environ.get("BERNOULLI_FORGE_THREADS")
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, n)


_cap_threads()

import argparse  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
import math  # noqa: E402
import sys  # noqa: E402
from pathlib import Path  # noqa: E402
from typing import Literal, Optional  # noqa: E402

import numpy as np  # noqa: E402
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator  # noqa: E402

try:
    import tomllib  # noqa: E402
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib  # noqa: E402

from .errors import BernoulliError, ConfigInvalid  # noqa: E402
from .field import FlowSpeedPair, field_from_spec  # noqa: E402
from .geom import ArcPair, PeriodicArc, read_arc_csv, write_arc_csv  # noqa: E402
from .potential import GridSpec  # noqa: E402

log = logging.getLogger("bernoulli_forge")

EXIT_OK, EXIT_CONFIG, EXIT_REFUSED, EXIT_NUMERIC = 0, 1, 2, 3


# -- configuration schema


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class ProblemCfg(_Strict):
    period: float = Field(gt=0)
    a1: dict
    a2: Optional[dict] = None
    lambdas: tuple[float, float] = Field(default=(1.0, 1.0), alias="lambda")

    @field_validator("lambdas")
    @classmethod
    def _positive(cls, v):
        if min(v) <= 0:
            raise ValueError("lambda entries must be positive")
        return v


class BracketCfg(_Strict):
    mode: Literal["explicit", "narrow-stream-auto"] = "explicit"
    lower: Optional[tuple[float, float]] = None  # flat heights of (gamma1, gamma2)
    upper: Optional[tuple[float, float]] = None
    lower_csv: Optional[tuple[str, str]] = None
    upper_csv: Optional[tuple[str, str]] = None
    offset: float = Field(default=0.3, gt=0)
    start_amplitude: float = 0.3
    start_height: float = 0.2
    relax_tol: float = Field(default=1e-4, gt=0)


class GridCfg(_Strict):
    nx: int = Field(default=256, ge=32)
    ny: int = Field(default=256, ge=32)
    pad: float = Field(default=0.5, ge=0)
    tol_pde: float = Field(default=1e-8, gt=0, le=1e-3)


class SolveCfg(_Strict):
    eps_schedule: list[float] = [0.08, 0.04, 0.02, 0.01]
    tol_fp: Optional[float] = None
    max_iter: int = Field(default=400, ge=1)
    side: Literal["lower", "upper"] = "lower"
    check_eps1: bool = True
    residual_threshold: float = Field(default=0.05, gt=0)


class DiagnosticsCfg(_Strict):
    enabled: bool = True
    rho0: float = 0.1
    r0: float = 0.01


class Solve1dCfg(_Strict):
    eps: float = Field(default=0.05, gt=0)
    start: tuple[float, float] = (-0.7, 0.1)
    window: tuple[float, float] = (-2.0, 2.0)
    n: int = Field(default=4001, ge=3)
    tol: float = Field(default=1e-10, gt=0)


class SweepCfg(_Strict):
    mu: list[float]
    max_halvings: int = Field(default=4, ge=0)


class MapCfg(_Strict):
    source: Literal["solve", "circles"] = "solve"
    r_inner: float = Field(default=math.exp(-1.0), gt=0)
    r_outer: float = Field(default=1.0, gt=0)
    coef: float = Field(default=1.0, gt=0)
    n: int = Field(default=256, ge=8)


class RunConfig(_Strict):
    problem: ProblemCfg
    bracket: BracketCfg = BracketCfg()
    grid: GridCfg = GridCfg()
    solve: SolveCfg = SolveCfg()
    diagnostics: DiagnosticsCfg = DiagnosticsCfg()
    solve1d: Optional[Solve1dCfg] = None
    sweep: Optional[SweepCfg] = None
    map: Optional[MapCfg] = None
    output: str = "out"
    seed: int = 0


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid(f"malformed TOML: {exc}") from exc
    try:
        cfg = RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigInvalid(str(exc)) from exc
    base = Path(path).resolve().parent
    try:
        _fields(cfg, base)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigInvalid(f"bad field record: {exc}") from exc
    return cfg


def _resolve_paths(spec: dict, base: Path) -> dict:
    out = {}
    for k, v in spec.items():
        if k == "path" and isinstance(v, str):
            out[k] = str((base / v).resolve())
        elif isinstance(v, dict):
            out[k] = _resolve_paths(v, base)
        elif isinstance(v, list):
            out[k] = [_resolve_paths(x, base) if isinstance(x, dict) else x for x in v]
        else:
            out[k] = v
    return out


def _fields(cfg: RunConfig, base: Path = Path(".")) -> FlowSpeedPair:
    P = cfg.problem.period
    a1 = field_from_spec(_resolve_paths(cfg.problem.a1, base), P)
    a2 = a1 if cfg.problem.a2 is None else field_from_spec(_resolve_paths(cfg.problem.a2, base), P)
    return FlowSpeedPair(a1, a2, *cfg.problem.lambdas)


# -- helpers


def _grid(cfg: RunConfig, scale: int) -> GridSpec:
    g = cfg.grid
    return GridSpec(g.nx, g.ny, pad=g.pad, tol_pde=g.tol_pde).scaled(scale)


def _dump_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _write_pair(out: Path, stem: str, pair: ArcPair) -> None:
    write_arc_csv(out / f"{stem}_gamma1.csv", pair.gamma1)
    write_arc_csv(out / f"{stem}_gamma2.csv", pair.gamma2)


def _brackets(cfg: RunConfig, fields: FlowSpeedPair, grid: GridSpec, base: Path) -> tuple[ArcPair, ArcPair]:
    from .iterate import verify_bracket

    b = cfg.bracket
    P = cfg.problem.period
    n = grid.nx
    if b.mode == "explicit":
        pairs = []
        for flat, csvs, name in ((b.lower, b.lower_csv, "lower"), (b.upper, b.upper_csv, "upper")):
            if flat is not None:
                pairs.append(ArcPair(PeriodicArc.flat(flat[0], P, n), PeriodicArc.flat(flat[1], P, n)))
            elif csvs is not None:
                pairs.append(ArcPair(read_arc_csv(base / csvs[0], P), read_arc_csv(base / csvs[1], P)))
            else:
                raise ConfigInvalid(f"explicit bracket needs '{name}' or '{name}_csv'")
        return pairs[0], pairs[1]
    # relax a start curve to a valley of a1, then place flat-width pairs around it
    from .reduced import narrow_stream_relax

    start = PeriodicArc.from_graph(lambda x: b.start_amplitude * np.sin(2 * np.pi * x / P) + b.start_height, P, 128)
    valley = narrow_stream_relax(start, fields.a1, tol_ns=b.relax_tol)
    v = valley.vertices
    # flat-stream width: 1/w matches the mean speeds on the two offset curves
    w = 1.0 / float(np.mean(fields.speed(1, v[:, 0], v[:, 1])))
    for _ in range(50):
        s1 = float(np.mean(fields.speed(1, v[:, 0], v[:, 1] - 0.5 * w)))
        s2 = float(np.mean(fields.speed(2, v[:, 0], v[:, 1] + 0.5 * w)))
        w = 0.5 * (w + 2.0 / (s1 + s2))
    valley = PeriodicArc.from_graph(lambda x: np.interp(x, v[:, 0], v[:, 1], period=P), P, n)
    for o in (b.offset, 1.5 * b.offset, 0.5 * b.offset, 2.0 * b.offset):
        lower = ArcPair(valley.shifted(0, -0.5 * w - o), valley.shifted(0, 0.5 * w - o))
        upper = ArcPair(valley.shifted(0, -0.5 * w + o), valley.shifted(0, 0.5 * w + o))
        spec = grid.window_for(lower, upper)
        if verify_bracket(lower, fields, spec).is_strict_lower and verify_bracket(upper, fields, spec).is_strict_upper:
            log.info("narrow-stream bracket: valley mean %.4g, width %.4g, offset %.3g", float(v[:, 1].mean()), w, o)
            return lower, upper
    from .errors import InvalidBracket

    raise InvalidBracket("no automatic bracket around the narrow-stream curve verified")


def _screen(fields: FlowSpeedPair, region) -> dict | None:
    from .verify import screen_nonexistence

    gap, mt = screen_nonexistence(fields, region)
    if gap.blocked or mt.blocked:
        return {"gap_test": gap.to_json(), "mu_test": mt.to_json()}
    return None


def _solve(cfg: RunConfig, args, out: Path, base: Path):
    """Shared front half of solve/diagnose/map; returns (record, fields, lower, upper) or an exit code."""
    from .iterate import solve_bernoulli

    fields = _fields(cfg, base)
    grid = _grid(cfg, args.grid_scale)
    lower, upper = _brackets(cfg, fields, grid, base)
    spec = grid.window_for(lower, upper)
    refused = _screen(fields, (0.0, cfg.problem.period, spec.ylo, spec.yhi))
    if refused is not None:
        _dump_json(out / "screen.json", refused)
        print(f"refused by nonexistence screen: {json.dumps(refused, default=_json_default)}", file=sys.stderr)
        return EXIT_REFUSED
    s = cfg.solve
    rec = solve_bernoulli(
        lower,
        upper,
        fields,
        spec,
        s.eps_schedule,
        s.tol_fp,
        side=s.side,
        max_iter=s.max_iter,
        check_eps1=s.check_eps1,
        trace_dir=args.trace_dir,
    )
    return rec, fields, lower, upper


def _emit_solution(cfg: RunConfig, out: Path, rec, fields, lower, upper) -> None:
    from .plot import write_svg

    _write_pair(out, "solution", rec.pair)
    data = rec.to_json()
    data["seed"] = cfg.seed
    _dump_json(out / "solution.json", data)
    write_svg(
        out / "solution.svg",
        [lower.gamma1, lower.gamma2, upper.gamma1, upper.gamma2, rec.pair.gamma1, rec.pair.gamma2],
        title="brackets and solution",
        colors=("#9ecae1", "#9ecae1", "#fdae6b", "#fdae6b", "#000000", "#000000"),
    )


def _emit_diagnostics(cfg: RunConfig, out: Path, rec, fields) -> dict:
    from .verify import diagnose

    rep = diagnose(rec, fields, rho0=cfg.diagnostics.rho0, r0=cfg.diagnostics.r0).to_json()
    _dump_json(out / "diagnostics.json", rep)
    return rep


# -- subcommands


def cmd_solve(cfg: RunConfig, args, out: Path, base: Path) -> int:
    res = _solve(cfg, args, out, base)
    if isinstance(res, int):
        return res
    rec, fields, lower, upper = res
    _emit_solution(cfg, out, rec, fields, lower, upper)
    if cfg.diagnostics.enabled:
        _emit_diagnostics(cfg, out, rec, fields)
    ok = rec.converged and rec.residual_max <= cfg.solve.residual_threshold
    print(f"residual_max={rec.residual_max:.3e} converged={rec.converged} seconds={rec.seconds:.1f}")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_diagnose(cfg: RunConfig, args, out: Path, base: Path) -> int:
    res = _solve(cfg, args, out, base)
    if isinstance(res, int):
        return res
    rec, fields, lower, upper = res
    _emit_solution(cfg, out, rec, fields, lower, upper)
    rep = _emit_diagnostics(cfg, out, rec, fields)
    print(json.dumps(rep, indent=2, default=_json_default))
    return EXIT_OK


def cmd_solve1d(cfg: RunConfig, args, out: Path, base: Path) -> int:
    from .reduced import OneDimPair, OneDimProblem, nearest_solution_distance, solve1d_bruteforce, t1d_iterate

    c = cfg.solve1d or Solve1dCfg()
    fields = _fields(cfg, base)
    l1, l2 = fields.lambdas

    def b1(x):
        return 1.0 / (l1 * fields.a1.eval(np.zeros_like(x), x))

    def b2(x):
        return 1.0 / (l2 * fields.a2.eval(np.zeros_like(x), x))

    prob = OneDimProblem.sampled(b1, b2, window=(c.window[0] - 5.0, c.window[1] + 5.0))
    sols = solve1d_bruteforce(prob, c.window, c.n)
    data = {
        "b_lo": prob.b_lo,
        "B1": prob.B1,
        "eta0": prob.eta0,
        "bruteforce": [list(s.pair.as_tuple()) for s in sols],
    }
    if not sols:
        _dump_json(out / "solve1d.json", data)
        print("no one-dimensional solution in the scan window", file=sys.stderr)
        return EXIT_REFUSED
    run = t1d_iterate(OneDimPair(*c.start), c.eps, prob, tol=c.tol)
    data.update(
        fixed_point=list(run.final.as_tuple()),
        converged=run.converged,
        steps=len(run.pairs) - 1,
        distance_to_bruteforce=nearest_solution_distance(run.final, sols),
    )
    with open(out / "solve1d_chain.csv", "w") as fh:
        fh.write("k,x1,x2\n")
        for k, p in enumerate(run.pairs):
            fh.write(f"{k},{float(p.x1)!r},{float(p.x2)!r}\n")
    _dump_json(out / "solve1d.json", data)
    print(f"fixed point {run.final.as_tuple()} distance {data['distance_to_bruteforce']:.3e}")
    return EXIT_OK if run.converged else EXIT_NUMERIC


def cmd_sweep(cfg: RunConfig, args, out: Path, base: Path) -> int:
    from .continuation import sweep, write_family

    if cfg.sweep is None:
        raise ConfigInvalid("sweep needs a [sweep] table")
    if tuple(cfg.problem.lambdas) != (1.0, 1.0):
        raise ConfigInvalid("sweep seeds at lambda = (1, 1)")
    if cfg.problem.a2 is not None and cfg.problem.a2 != cfg.problem.a1:
        raise ConfigInvalid("sweep needs a single field (a2 omitted or equal to a1)")
    res = _solve(cfg, args, out, base)
    if isinstance(res, int):
        return res
    rec, fields, lower, upper = res
    grid = _grid(cfg, args.grid_scale).window_for(lower, upper)
    fam = sweep(rec, cfg.sweep.mu, fields.a1, grid, cfg.solve.eps_schedule, max_halvings=cfg.sweep.max_halvings)
    write_family(fam, out, fields.a1)
    _dump_json(
        out / "family.json",
        {"termination": fam.termination, "ordering_violations": fam.ordering_violations, "L_fam": fam.L_fam, "mu": fam.mus()},
    )
    print(f"{len(fam.points)} members, termination {fam.termination}, L_fam={fam.L_fam:.3g}")
    return EXIT_OK if fam.ordering_violations == 0 else EXIT_NUMERIC


def cmd_map(cfg: RunConfig, args, out: Path, base: Path) -> int:
    from .mapconform import AnnularCurve, AnnularProblem, annular_residual, periodic_to_annular, write_annular_csv

    c = cfg.map or MapCfg()
    grid = _grid(cfg, args.grid_scale)
    if c.source == "circles":
        coef = c.coef
        prob = AnnularProblem(
            AnnularCurve.circle(c.r_inner, c.n),
            AnnularCurve.circle(c.r_outer, c.n),
            lambda r, th: coef / r,
            lambda r, th: coef / r,
        )
        data = {"annular_residual": annular_residual(prob, grid)}
    else:
        res = _solve(cfg, args, out, base)
        if isinstance(res, int):
            return res
        rec, fields, lower, upper = res
        _emit_solution(cfg, out, rec, fields, lower, upper)
        prob = periodic_to_annular(rec.pair, fields)
        data = {"periodic_residual": rec.residual_max, "annular_residual": annular_residual(prob, grid)}
    write_annular_csv(out / "annular_inner.csv", prob.inner)
    write_annular_csv(out / "annular_outer.csv", prob.outer)
    _dump_json(out / "map.json", data)
    print(json.dumps(data))
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "solve1d": cmd_solve1d,
    "sweep": cmd_sweep,
    "diagnose": cmd_diagnose,
    "map": cmd_map,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bernoulli-forge", description="Periodic two-boundary Bernoulli free-boundary solver.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="TOML run configuration")
        s.add_argument("--out", default=None, help="output directory (overrides the config)")
        s.add_argument("--trace-dir", default=None, help="write per-iteration curves and trace.csv here")
        s.add_argument("--grid-scale", type=int, default=1, help="multiply nx and ny by this factor")
        s.add_argument("--seed", type=int, default=None, help="random seed recorded with the outputs")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.grid_scale < 1:
        print("--grid-scale must be a positive integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
    except ConfigInvalid as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    np.random.seed(cfg.seed)
    out = Path(args.out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    base = Path(args.config).resolve().parent
    try:
        return COMMANDS[args.command](cfg, args, out, base)
    except ConfigInvalid as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BernoulliError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    raise SystemExit(main())
