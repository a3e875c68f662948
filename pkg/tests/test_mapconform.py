import math

import numpy as np
import pytest

from bernoulli_forge.errors import OriginTouched
from bernoulli_forge.field import Constant, FlowSpeedPair
from bernoulli_forge.geom import ArcPair, PeriodicArc
from bernoulli_forge.mapconform import (
    AnnularCurve,
    AnnularProblem,
    annular_residual,
    annular_to_periodic,
    periodic_residual,
    periodic_to_annular,
    read_annular_csv,
    write_annular_csv,
)
from bernoulli_forge.potential import GridSpec

from conftest import P, flat_pair, graph_arc

E1 = math.exp(-1.0)


def inv_r(r, th):
    return 1.0 / r


def circles(a=inv_r, n=256):
    return AnnularProblem(AnnularCurve.circle(E1, n), AnnularCurve.circle(1.0, n), a, a)


def wobbly(n=256):
    th = 2 * math.pi * np.arange(n) / n
    inner = AnnularCurve(th, E1 * (1 + 0.1 * np.cos(th)))
    outer = AnnularCurve(th, 1 + 0.1 * np.sin(2 * th))
    return AnnularProblem(inner, outer, inv_r, inv_r)


class TestCurves:
    def test_origin_touched(self):
        with pytest.raises(OriginTouched):
            AnnularCurve(np.array([0.0, 2.0, 4.0]), np.array([1.0, 0.0, 1.0]))

    def test_unit_circle_maps_to_axis(self):
        arc = AnnularCurve.circle(1.0).to_arc()
        assert np.max(np.abs(arc.vertices[:, 1])) == 0.0

    def test_clockwise_rejected(self):
        th = 2 * math.pi * np.arange(8) / 8
        with pytest.raises(ValueError):
            AnnularCurve(th[::-1], np.ones(8)).to_arc()

    def test_nesting_checked(self):
        with pytest.raises(ValueError):
            AnnularProblem(AnnularCurve.circle(1.0), AnnularCurve.circle(0.5), inv_r, inv_r)

    def test_csv_roundtrip(self, tmp_path):
        c = wobbly().inner
        write_annular_csv(tmp_path / "c.csv", c)
        back = read_annular_csv(tmp_path / "c.csv")
        assert np.array_equal(back.theta, c.theta) and np.array_equal(back.r, c.r)


class TestTransforms:
    def test_circles_become_unit_strip(self):
        pair, fields = annular_to_periodic(circles())
        assert np.allclose(pair.gamma1.vertices[:, 1], 0.0, atol=1e-15)
        assert np.allclose(pair.gamma2.vertices[:, 1], 1.0, atol=1e-15)
        x = np.linspace(0, P, 30)
        for i in (1, 2):
            for y in (-0.3, 0.0, 0.5, 1.0):
                assert fields.speed(i, x, y) == pytest.approx(np.ones(30), rel=1e-14)

    def test_roundtrip(self):
        prob = wobbly()
        pair, fields = annular_to_periodic(prob)
        back = periodic_to_annular(pair, fields)
        for a, b in ((prob.inner, back.inner), (prob.outer, back.outer)):
            assert np.max(np.abs(a.theta - b.theta)) <= 1e-12
            assert np.max(np.abs(a.r - b.r)) <= 1e-12
        r = np.linspace(0.3, 1.2, 20)
        th = np.linspace(0, 6, 20)
        assert np.max(np.abs(back.a_inner(r, th) - inv_r(r, th))) <= 1e-12

    def test_flat_unit_pair_to_circles(self):
        fields = FlowSpeedPair(Constant(1.0), Constant(1.0))
        prob = periodic_to_annular(flat_pair(0.0, 1.0), fields)
        assert np.allclose(prob.outer.r, 1.0, rtol=1e-15)
        assert np.allclose(prob.inner.r, E1, rtol=1e-15)
        r = np.array([E1, 0.6, 1.0])
        assert prob.a_inner(r, np.zeros(3)) == pytest.approx(1.0 / r, rel=1e-14)

    def test_period_rescaling(self):
        # a strip of period 1 maps with lengths scaled by 2 pi
        arc1 = PeriodicArc(np.column_stack([np.linspace(0, 1, 64, endpoint=False), np.zeros(64)]), 1.0)
        arc2 = PeriodicArc(np.column_stack([np.linspace(0, 1, 64, endpoint=False), np.full(64, 1 / (2 * math.pi))]), 1.0)
        fields = FlowSpeedPair(Constant(2 * math.pi, period=1.0), Constant(2 * math.pi, period=1.0))
        prob = periodic_to_annular(ArcPair(arc1, arc2), fields)
        assert np.allclose(prob.inner.r, E1)
        assert prob.a_outer(np.array([1.0]), np.array([0.0])) == pytest.approx([1.0])


class TestResidual:
    def test_exact_circles(self):
        assert annular_residual(circles(), GridSpec(128, 128)) <= 1e-4

    def test_wrong_speed(self):
        res = annular_residual(circles(lambda r, th: 2.0 / r), GridSpec(128, 128))
        assert res > 0.3
        # |grad U| = 1/r exactly, so the miss is 1/r, largest on the inner circle
        assert res == pytest.approx(1 / E1, rel=1e-3)

    def test_rotation_invariance(self):
        prob = circles()
        base = annular_residual(prob, GridSpec(128, 128))
        rot = AnnularProblem(prob.inner.rotated(0.7), prob.outer.rotated(0.7), inv_r, inv_r)
        assert abs(annular_residual(rot, GridSpec(128, 128)) - base) <= 1e-10

    def test_grid_rotation_of_a_wobbly_pair(self):
        # a shift by a whole number of grid columns is exact for the discretisation too
        prob = wobbly()
        spec = GridSpec(128, 128)
        base = annular_residual(prob, spec)
        k = 2 * math.pi * 16 / 128
        rot = AnnularProblem(prob.inner.rotated(k), prob.outer.rotated(k), inv_r, inv_r)
        assert abs(annular_residual(rot, spec) - base) <= 1e-10

    def test_cosh_solution_maps_cleanly(self, cosh_solution, cosh_fields):
        spec = GridSpec(256, 256)
        per = periodic_residual(cosh_solution.pair, cosh_fields, spec)
        ann = annular_residual(periodic_to_annular(cosh_solution.pair, cosh_fields), spec)
        assert ann <= 2 * per

    def test_periodic_residual_of_unit_strip(self):
        fields = FlowSpeedPair(Constant(1.0), Constant(1.0))
        assert periodic_residual(flat_pair(0.0, 1.0), fields, GridSpec(64, 64)) < 1e-6
        assert periodic_residual(graph_arc_pair(), fields, GridSpec(64, 64)) > 0.01


def graph_arc_pair():
    return ArcPair(graph_arc(lambda x: 0.2 * np.sin(x)), graph_arc(lambda x: np.ones_like(x)))
