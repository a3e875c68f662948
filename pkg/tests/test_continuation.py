import csv
import math

import numpy as np
import pytest

from bernoulli_forge.continuation import (
    Family,
    FamilyPoint,
    family_uniqueness_window,
    lambdas_for,
    offset_levels,
    sweep,
    write_family,
)
from bernoulli_forge.errors import LevelOutOfWindow, SeedNotAtMuZero
from bernoulli_forge.field import Constant, Cosh, FlowSpeedPair
from bernoulli_forge.geom import pair_hausdorff, pair_le
from bernoulli_forge.iterate import solve_bernoulli, verify_bracket
from bernoulli_forge.potential import GridSpec
from bernoulli_forge.verify import capacity

from conftest import SCHEDULE, flat_newton, flat_pair, record_for

MUS = np.linspace(-0.2, 0.2, 9)


class TestOffsetLevels:
    def test_flat_strip(self):
        rec = record_for(flat_pair(0.0, 1.0), FlowSpeedPair(Constant(1.0), Constant(1.0)), GridSpec(96, 96))
        out = offset_levels(rec, (0.05, -0.05))
        assert np.max(np.abs(out.gamma1.vertices[:, 1] - 0.05)) < 1e-6
        assert np.max(np.abs(out.gamma2.vertices[:, 1] - 0.95)) < 1e-6

    def test_zero_is_identity(self, cosh_solution):
        out = offset_levels(cosh_solution, (0.0, 0.0))
        assert pair_hausdorff(out, cosh_solution.pair) <= cosh_solution.grid.h

    def test_cosh_upper_barrier(self, cosh_solution):
        out = offset_levels(cosh_solution, (0.05, 0.05))
        assert pair_le(cosh_solution.pair, out)
        # raising lambda1 a little keeps the shifted pair an upper solution
        l1 = math.exp(0.01)
        fields = FlowSpeedPair(Cosh(), Cosh(), l1, 1 / l1)
        assert verify_bracket(out, fields, GridSpec(256, 256)).is_strict_upper

    def test_too_large(self, cosh_solution):
        with pytest.raises(LevelOutOfWindow):
            offset_levels(cosh_solution, (0.3, 0.0))


class TestFamilyTypes:
    def test_lambda_product(self):
        for mu in (-1.0, 0.0, 0.37):
            l1, l2 = lambdas_for(mu)
            assert l1 * l2 == pytest.approx(1.0, abs=1e-12)
            assert math.log(l1) == pytest.approx(mu / 2)

    def test_point_checks_product(self, cosh_solution):
        with pytest.raises(ValueError):
            FamilyPoint(0.0, 0.0, (1.0, 2.0), cosh_solution)


class TestSweep:
    def test_nine_points(self, cosh_family):
        assert [round(m, 12) for m in cosh_family.mus()] == [round(m, 12) for m in MUS]
        assert cosh_family.termination == {"up": "range-exhausted", "down": "range-exhausted"}

    def test_newton_oracle(self, cosh_family):
        for p in cosh_family.points:
            c1, c2 = flat_newton(p.mu)
            g1, g2 = p.pair.gamma1.vertices[:, 1], p.pair.gamma2.vertices[:, 1]
            assert np.ptp(g1) < 0.01 and np.ptp(g2) < 0.01
            assert abs(g1.mean() - c1) <= 0.01 and abs(g2.mean() - c2) <= 0.01

    def test_strictly_ordered(self, cosh_family):
        assert cosh_family.ordering_violations == 0
        ts = [p.t for p in cosh_family.points]
        assert all(a < b for a, b in zip(ts, ts[1:]))

    def test_capacity_consistency(self, cosh_family):
        for p in cosh_family.points:
            c1, c2 = capacity(p.pair, FlowSpeedPair(Cosh(), Cosh(), *p.lambdas))
            assert abs(c1 - c2) <= 0.01 * c1

    def test_lipschitz_constant(self, cosh_family):
        L = cosh_family.L_fam
        assert 0 < L < 10
        for p, q in zip(cosh_family.points, cosh_family.points[1:]):
            assert pair_hausdorff(p.pair, q.pair) <= L * abs(q.mu - p.mu) + 1e-12

    def test_screen_terminates(self):
        spec = GridSpec(96, 96, ylo=-1.6, yhi=1.6)
        seed = solve_bernoulli(flat_pair(-0.7, 0.1), flat_pair(-0.1, 0.7), FlowSpeedPair(Cosh(), Cosh()), spec, SCHEDULE)
        # at mu = 0.8 the pair's own ln(l2/l1) is -0.8 and 0.8 e^{-0.4} > 1/2;
        # a tall screening region keeps the gap test out of the way
        fam = sweep(seed, [0.0, 0.4, 0.8], Cosh(), spec, region=(0.0, 2 * math.pi, -3.0, 3.0))
        assert fam.termination["up"] == "nonexistence-screen"
        assert fam.mus()[-1] == pytest.approx(0.4)

    def test_seed_not_at_zero(self):
        l1 = math.exp(0.1)
        rec = record_for(flat_pair(-0.5, 0.5), FlowSpeedPair(Cosh(), Cosh(), l1, 1 / l1), GridSpec(64, 64))
        with pytest.raises(SeedNotAtMuZero):
            sweep(rec, [0.0, 0.1], Cosh(), GridSpec(64, 64))

    def test_grid_needs_zero(self, cosh_solution):
        with pytest.raises(ValueError):
            sweep(cosh_solution, [0.1, 0.2], Cosh(), GridSpec(64, 64))


class TestWindow:
    def test_resolved_probe_is_sandwiched(self, cosh_family):
        probe = solve_bernoulli(flat_pair(-0.9, 0.05), flat_pair(-0.05, 0.9), FlowSpeedPair(Cosh(), Cosh()), GridSpec(256, 256), SCHEDULE)
        h = probe.grid.h
        v = family_uniqueness_window(cosh_family, probe.pair, 0.0, 3 * h)
        assert v.sandwiched and v.agrees
        assert v.alpha < 0.0 < v.beta

    def test_member_itself(self, cosh_family):
        p = cosh_family.at(0.1)
        v = family_uniqueness_window(cosh_family, p.pair, 0.1, 1e-12)
        assert v.sandwiched and v.distance == 0.0

    def test_outside_range(self, cosh_family):
        p = cosh_family.at(0.2)
        v = family_uniqueness_window(cosh_family, p.pair, 0.2, 1e-12)
        assert not v.sandwiched and v.to_json()["distance"] is None


def test_write_family(tmp_path, cosh_family):
    path = write_family(cosh_family, tmp_path, Cosh())
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "mu", "lambda1", "lambda2", "cap", "residual_max"]
    assert len(rows) == 10
    assert all(np.isfinite(float(x)) for r in rows[1:] for x in r)
    assert len(list(tmp_path.glob("member_*_gamma1.csv"))) == 9
    assert (tmp_path / "family.svg").read_text().startswith("<")
