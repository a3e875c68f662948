import csv
import math

import numpy as np
import pytest

from bernoulli_forge.errors import InvalidBracket, NoConvergence, PreconditionFailed
from bernoulli_forge.field import Constant, Cosh, FlowSpeedPair, joint_constants
from bernoulli_forge.geom import distances_to_arc, hausdorff, pair_hausdorff, pair_le
from bernoulli_forge.iterate import (
    TOL_BG,
    IterationTrace,
    epsilon1,
    mean_height,
    monotone_iterate,
    solve_bernoulli,
    verify_bracket,
)
from bernoulli_forge.potential import Grid, GridSpec, boundary_gradient, level_curve
from bernoulli_forge.trial_ops import MINUS, PLUS

from conftest import P, SCHEDULE, flat_pair, graph_arc


class TestVerifyBracket:
    def test_cosh_lower(self, cosh_fields):
        rep = verify_bracket(flat_pair(-0.7, 0.1), cosh_fields, GridSpec(128, 128))
        assert rep.is_strict_lower and not rep.is_strict_upper
        assert rep.role == "lower"
        # |grad U| = 1/0.8 on a flat strip; the binding side is gamma1
        assert rep.margin_lo == pytest.approx(math.cosh(0.7) - 1.25 - TOL_BG, abs=1e-5)

    def test_cosh_upper(self, cosh_fields):
        rep = verify_bracket(flat_pair(-0.1, 0.7), cosh_fields, GridSpec(128, 128))
        assert rep.is_strict_upper and rep.role == "upper"
        assert rep.margin_hi == pytest.approx(math.cosh(0.7) - 1.25 - TOL_BG, abs=1e-5)

    def test_solution_is_neither(self, cosh_fields, cstar):
        rep = verify_bracket(flat_pair(-cstar, cstar), cosh_fields, GridSpec(128, 128))
        assert rep.role is None

    def test_constant_fields_have_no_lower_solution(self):
        # a strict lower solution would need 1/w < 1 and 1/w > 2 at once
        fields = FlowSpeedPair(Constant(1.0), Constant(2.0))
        for w in (0.3, 0.5, 0.8, 1.0, 1.5):
            for y0 in (-0.5, 0.0, 0.5):
                rep = verify_bracket(flat_pair(y0, y0 + w), fields, GridSpec(64, 64))
                assert not rep.is_strict_lower
                assert rep.is_strict_upper == (0.5 < w < 1.0)


class TestEpsilon1:
    def test_positive_and_rechecked(self, cosh_fields, cosh_brackets):
        lower, upper = cosh_brackets
        spec = GridSpec(128, 128)
        e1 = epsilon1(lower, upper, cosh_fields, spec)
        assert e1 > 0
        # conditions re-verified at half the value
        from bernoulli_forge.iterate import _distance_conditions
        from bernoulli_forge.potential import solve_potential

        g = Grid.from_spec(spec.window_for(lower, upper), P)
        for pair, role in ((lower, "lower"), (upper, "upper")):
            U = solve_potential(pair, spec, grid=g)
            assert _distance_conditions(pair, U, cosh_fields, e1 / 2, role)

    def test_shrinks_toward_the_solution(self, cosh_fields):
        vals = []
        # fixed window so that only the brackets change
        spec = GridSpec(128, 128, ylo=-1.5, yhi=1.5)
        for d in (0.35, 0.25, 0.15):
            c = 0.4528
            lower = flat_pair(-c - d, c - d)
            upper = flat_pair(-c + d, c + d)
            vals.append(epsilon1(lower, upper, cosh_fields, spec))
        assert vals[0] >= vals[1] >= vals[2] > 0

    def test_unit_field_refused(self, unit_fields):
        with pytest.raises(InvalidBracket):
            epsilon1(flat_pair(0.0, 1.2), flat_pair(0.1, 1.0), unit_fields, GridSpec(64, 64))


class TestMonotoneIterate:
    def test_unit_fixed_point_in_one_step(self, unit_fields):
        tr = monotone_iterate(flat_pair(0.0, 1.0), 0.1, MINUS, unit_fields, GridSpec(128, 128))
        assert tr.converged
        assert tr.evaluations <= 2
        assert len(tr.steps) == 2
        assert pair_hausdorff(tr.final, flat_pair(0.0, 1.0)) <= Grid.from_spec(GridSpec(128, 128).window_for(flat_pair(0.0, 1.0)), P).h

    def test_cosh_lower_and_upper_runs(self, cosh_fields, cosh_brackets, cstar):
        lower, upper = cosh_brackets
        spec = GridSpec(128, 128).window_for(lower, upper)
        lo = monotone_iterate(lower, 0.05, MINUS, cosh_fields, spec, bound=upper)
        hi = monotone_iterate(upper, 0.05, PLUS, cosh_fields, spec, bound=lower)
        exact = flat_pair(-cstar, cstar)
        assert pair_hausdorff(lo.final, exact) <= 3 * 0.05
        assert pair_hausdorff(hi.final, exact) <= 3 * 0.05
        h = Grid.from_spec(spec, P).h
        assert pair_le(lo.final, hi.final, slack=h)

    def test_plain_iterates_are_monotone(self, cosh_fields, cosh_brackets):
        lower, upper = cosh_brackets
        spec = GridSpec(96, 96).window_for(lower, upper)
        # a fixed number of plain steps, with a stopping rule that cannot fire
        with pytest.raises(NoConvergence) as info:
            monotone_iterate(lower, 0.08, MINUS, cosh_fields, spec, max_iter=6, tol_fp=1e-14, accelerate=False)
        trace = info.value.last
        assert isinstance(trace, IterationTrace)
        pairs = trace.pairs()
        h = Grid.from_spec(spec, P).h
        assert all(pair_le(a, b, slack=h) for a, b in zip(pairs, pairs[1:]))
        assert all(s.flag[0].is_ge() and s.flag[1].is_ge() for s in trace.steps[1:])

    def test_wrong_start_rejected(self, cosh_fields):
        # a strip narrower than the solution is pushed outwards, i.e. backwards for a lower run
        start = flat_pair(-0.2, 0.2)
        with pytest.raises(PreconditionFailed):
            monotone_iterate(start, 0.1, MINUS, cosh_fields, GridSpec(256, 256).window_for(start), role="lower")

    def test_bad_sign(self, cosh_fields, cosh_brackets):
        with pytest.raises(ValueError):
            monotone_iterate(cosh_brackets[0], 0.05, "up", cosh_fields, GridSpec(64, 64))

    def test_trace_files(self, tmp_path, unit_fields):
        monotone_iterate(flat_pair(0.0, 1.0), 0.1, MINUS, unit_fields, GridSpec(64, 64), trace_dir=tmp_path)
        rows = list(csv.reader(open(tmp_path / "trace.csv")))
        assert rows[0] == ["eps", "sign", "iter", "step", "residual", "accelerated"]
        assert len(rows) >= 3
        assert list(tmp_path.glob("*_gamma1.csv"))


class TestSolveBernoulli:
    def test_cosh_reference(self, cosh_solution, cstar):
        sol = cosh_solution
        assert sol.converged
        assert mean_height(sol.pair.gamma1) == pytest.approx(-cstar, abs=0.01)
        assert mean_height(sol.pair.gamma2) == pytest.approx(cstar, abs=0.01)
        assert sol.eps_schedule == list(SCHEDULE)

    def test_residual_decreases(self, cosh_solution):
        r = cosh_solution.residual_history
        assert len(r) == 4
        assert all(b <= 1.1 * a for a, b in zip(r, r[1:]))

    def test_fixed_point_characterisation(self, cosh_solution, cosh_fields):
        # on a fixed point, lambda a(p) dist(p, level eps) = eps on the boundary
        sol = cosh_solution
        eps = sol.eps_schedule[-1]
        U = sol.field
        h = sol.grid.h
        for i, arc in ((1, sol.pair.gamma1), (2, sol.pair.gamma2)):
            lev = level_curve(U, eps if i == 1 else 1 - eps)
            p = arc.vertices
            w = cosh_fields.speed(i, p[:, 0], p[:, 1]) * distances_to_arc(p, lev)
            assert np.max(np.abs(w - eps)) <= 0.1 * eps + h**2

    def test_separation(self, cosh_solution, cosh_fields):
        sol = cosh_solution
        region = (0.0, P, sol.grid.ylo, sol.grid.yhi)
        A = joint_constants(cosh_fields, (0.0, P, -1.0, 1.0)).a_hi
        eps = sol.eps_schedule[-1]
        sep = float(np.min(distances_to_arc(sol.pair.gamma1.vertices, sol.pair.gamma2)))
        assert sep >= (1 - 2 * eps) / (2 * A) - 2 * sol.grid.h
        assert region[2] < region[3]

    def test_flux_identity(self, cosh_solution, cosh_fields):
        from bernoulli_forge.verify import capacity

        c1, c2 = capacity(cosh_solution.pair, cosh_fields)
        assert abs(c1 - c2) <= 0.01 * max(c1, c2)

    def test_gradient_floor(self, cosh_solution, cosh_fields):
        c = joint_constants(cosh_fields, (0.0, P, -1.0, 1.0))
        floor = 0.5 * c.a_lo / (2 * math.log(8 * c.a_hi / c.a_lo))
        for i in (1, 2):
            assert np.min(boundary_gradient(cosh_solution.field, i).values) >= floor

    def test_upper_side_agrees(self, cosh_fields, cosh_brackets, cosh_solution):
        lower, upper = cosh_brackets
        sol = solve_bernoulli(lower, upper, cosh_fields, GridSpec(256, 256), SCHEDULE, side="upper")
        assert pair_hausdorff(sol.pair, cosh_solution.pair) <= 3 * sol.grid.h

    def test_constant_fields_refused(self):
        fields = FlowSpeedPair(Constant(1.0), Constant(2.0))
        with pytest.raises(InvalidBracket):
            solve_bernoulli(flat_pair(0.0, 0.5), flat_pair(0.2, 1.0), fields, GridSpec(64, 64))

    def test_unit_fields_refused(self, unit_fields):
        with pytest.raises(InvalidBracket):
            solve_bernoulli(flat_pair(0.0, 1.2), flat_pair(0.1, 1.0), unit_fields, GridSpec(64, 64))

    @pytest.mark.parametrize("sched", [(), (0.02, 0.04), (0.05, 0.0)])
    def test_bad_schedule(self, cosh_fields, cosh_brackets, sched):
        with pytest.raises(ValueError):
            solve_bernoulli(*cosh_brackets, cosh_fields, GridSpec(64, 64), sched)

    def test_first_eps_above_eps1(self, cosh_fields, cosh_brackets):
        with pytest.raises(InvalidBracket):
            solve_bernoulli(*cosh_brackets, cosh_fields, GridSpec(64, 64), (0.45, 0.1))

    def test_record_json(self, cosh_solution):
        d = cosh_solution.to_json()
        assert d["lambda"] == [1.0, 1.0]
        assert len(d["gamma1"]) == cosh_solution.pair.gamma1.n
        assert d["residual_max"] == cosh_solution.residual_max
