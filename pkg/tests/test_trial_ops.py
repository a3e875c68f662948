import math

import numpy as np
import pytest
from scipy.optimize import brentq

from bernoulli_forge.errors import EmptyRegion
from bernoulli_forge.field import Constant, Cosh, FlowSpeedPair, HarmonicX, Product, class_constants
from bernoulli_forge.geom import ArcPair, PeriodicArc, clearance, distances_to_arc, pair_le
from bernoulli_forge.potential import Grid, GridSpec
from bernoulli_forge.trial_ops import (
    CLOSED_H,
    MINUS,
    OPEN_G,
    PLUS,
    apply_T,
    psi,
    reachable_superlevel,
    variant_for,
    weighted_distance,
)

from conftest import P, flat_arc, flat_pair, graph_arc

# hy = 0.01 puts nodes exactly on y = -0.1
FINE = Grid(P, 128, 201, -1.0, 1.0)


def window(lo=-1.0, hi=1.0, n=128):
    return Grid(P, n, n, lo, hi)


class TestWeightedDistance:
    def test_cosh_node_value(self):
        wd = weighted_distance(Cosh(), 1.0, flat_arc(0.0), 1, FINE)
        j = int(round((-0.1 - FINE.ylo) / FINE.hy))
        assert FINE.y[j] == pytest.approx(-0.1, abs=1e-12)
        assert wd.phi[j, 0] == pytest.approx(0.1 * math.cosh(0.1), rel=1e-12)
        assert wd.phi[j, 0] == pytest.approx(0.1005, abs=1e-4)

    def test_other_side_is_nan(self):
        wd = weighted_distance(Cosh(), 1.0, flat_arc(0.0), 1, FINE)
        assert np.all(np.isnan(wd.phi[FINE.y > 0.005]))
        assert np.all(np.isfinite(wd.phi[FINE.y < -0.005]))

    def test_lambda_scales(self):
        a = weighted_distance(Cosh(), 1.0, flat_arc(0.0), 2, FINE)
        b = weighted_distance(Cosh(), 2.5, flat_arc(0.0), 2, FINE)
        m = np.isfinite(a.phi)
        assert b.phi[m] == pytest.approx(2.5 * a.phi[m])

    def test_band_keeps_exact_values_near_the_arc(self):
        full = weighted_distance(Cosh(), 1.0, graph_arc(lambda x: 0.2 * np.sin(x)), 1, FINE)
        banded = weighted_distance(Cosh(), 1.0, graph_arc(lambda x: 0.2 * np.sin(x)), 1, FINE, band=0.2)
        m = banded.exact & np.isfinite(full.phi)
        assert np.array_equal(full.phi[m], banded.phi[m])
        # elsewhere a lower bound
        rest = ~banded.exact & np.isfinite(full.phi)
        assert np.all(banded.phi[rest] <= full.phi[rest] + 1e-12)


class TestReachable:
    def test_unit_field_mask(self):
        g = window()
        wd = weighted_distance(Constant(1.0), 1.0, flat_arc(0.0), 1, g)
        mask = reachable_superlevel(wd, 0.1).mask
        Y = g.mesh()[1]
        # mask equals {y < -0.1} up to one cell
        assert np.all(mask[Y < -0.1 - g.hy])
        assert not np.any(mask[Y > -0.1 + g.hy])

    def test_empty_when_window_too_small(self):
        g = window(-0.05, 1.0)
        wd = weighted_distance(Constant(1.0), 1.0, flat_arc(0.0), 1, g)
        with pytest.raises(EmptyRegion):
            reachable_superlevel(wd, 0.1)

    def test_unreachable_chamber_is_dropped(self):
        # a bulb hanging below the line, entered through a neck of width 0.05;
        # it belongs to the upper side, its centre exceeds eps but the neck does not
        v = [(0.0, 0.0), (3.0, 0.0), (3.0, -0.3), (2.7, -0.3), (2.7, -0.9), (3.35, -0.9), (3.35, -0.3), (3.05, -0.3), (3.05, 0.0)]
        arc = PeriodicArc(v, P)
        g = window(-1.5, 1.0, 256)
        wd = weighted_distance(Constant(1.0), 1.0, arc, 2, g)
        X, Y = g.mesh()
        chamber = (X > 2.75) & (X < 3.3) & (Y > -0.85) & (Y < -0.35)
        assert np.nanmax(np.where(chamber, wd.phi, np.nan)) > 0.2
        mask = reachable_superlevel(wd, 0.05).mask
        assert not np.any(mask & chamber)
        assert np.all(mask[Y > 0.1])

    def test_variants(self):
        assert variant_for(1, PLUS) == CLOSED_H and variant_for(2, PLUS) == OPEN_G
        assert variant_for(1, MINUS) == OPEN_G and variant_for(2, MINUS) == CLOSED_H
        with pytest.raises(ValueError):
            variant_for(1, "both")
        wd = weighted_distance(Constant(1.0), 1.0, flat_arc(0.0), 1, window())
        with pytest.raises(ValueError):
            reachable_superlevel(wd, 0.1, "half-open")


class TestPsi:
    def test_constant_field(self):
        g = window()
        out = psi(flat_arc(0.0), 0.1, 1, MINUS, Constant(2.0), 1.0, g)
        assert np.max(np.abs(out.vertices[:, 1] + 0.05)) <= g.h
        up = psi(flat_arc(0.0), 0.1, 2, MINUS, Constant(2.0), 1.0, g)
        assert np.max(np.abs(up.vertices[:, 1] - 0.05)) <= g.h

    def test_cosh_offset(self):
        d = brentq(lambda t: t * math.cosh(t) - 0.1, 0.0, 1.0, xtol=1e-14)
        assert d == pytest.approx(0.0995, abs=1e-4)
        g = window(n=256)
        out = psi(flat_arc(0.0), 0.1, 1, PLUS, Cosh(), 1.0, g)
        assert np.max(np.abs(out.vertices[:, 1] + d)) <= g.h
        assert out.is_graph()

    def test_rejects_nonpositive_eps(self):
        with pytest.raises(ValueError):
            psi(flat_arc(0.0), 0.0, 1, MINUS, Cosh(), 1.0, window())

    def test_slope_bound_on_flat_input(self):
        a = Product(Cosh(), HarmonicX(0.3))
        c = class_constants(a, (0, P, -1, 1))
        C1 = 2 * c.d1_max / c.a_lo**2
        g = window(n=256)
        for eps in (0.05, 0.1):
            out = psi(flat_arc(0.0, 512), eps, 1, MINUS, a, 1.0, g, n_out=256)
            v = out.closed()
            slope = np.diff(v[:, 1]) / np.diff(v[:, 0])
            assert np.max(np.abs(slope)) <= 1.2 * C1 * eps

    def test_corner_radius(self):
        # a V-shaped arc; below the vertex the offset is a circle arc of radius eps / a(vertex)
        vx, vy = math.pi, 0.3
        arc = PeriodicArc([(0.0, vy + 0.5 * math.pi), (vx, vy), (P - 1e-3, vy + 0.5 * (math.pi - 1e-3))], P)
        a = Cosh()
        c = class_constants(a, (0, P, -1, 1))
        g = Grid(P, 512, 512, -0.5, 2.0)
        eps = 0.1
        out = psi(arc, eps, 1, MINUS, a, 1.0, g, n_out=1024)
        d = out.vertices - (vx, vy)
        r = np.hypot(*d.T)
        # keep samples well inside the normal cone of the vertex
        ang = np.arctan2(d[:, 1], d[:, 0])
        half = math.atan(0.5)
        cone = np.abs(ang + math.pi / 2) < half - 0.1
        assert cone.sum() > 5
        av = a(vx, vy)
        bound = 2 * (c.d1_max / c.a_lo) * eps**2 / (c.a_lo * av)
        assert np.max(np.abs(r[cone] - eps / av)) <= bound + g.h


class TestApplyT:
    def test_unit_fixed_point(self):
        pair = flat_pair(0.0, 1.0)
        fields = FlowSpeedPair(Constant(1.0), Constant(1.0))
        spec = GridSpec(128, 128).window_for(pair)
        h = Grid.from_spec(spec, P).h
        for eps in (0.05, 0.2, 0.35):
            out = apply_T(pair, eps, MINUS, fields, spec)
            assert np.max(np.abs(out.gamma1.vertices[:, 1])) <= h
            assert np.max(np.abs(out.gamma2.vertices[:, 1] - 1)) <= h

    def test_lower_bracket_moves_up(self, cosh_fields):
        pair = flat_pair(-0.7, 0.1)
        out = apply_T(pair, 0.05, MINUS, cosh_fields, GridSpec(128, 128).window_for(pair))
        assert clearance(pair.gamma1, out.gamma1) > 0
        assert clearance(pair.gamma2, out.gamma2) > 0

    def test_upper_bracket_moves_down(self, cosh_fields):
        pair = flat_pair(-0.1, 0.7)
        out = apply_T(pair, 0.05, PLUS, cosh_fields, GridSpec(128, 128).window_for(pair))
        assert clearance(out.gamma1, pair.gamma1) > 0
        assert clearance(out.gamma2, pair.gamma2) > 0

    def test_separation(self, cosh_fields):
        pair = ArcPair(graph_arc(lambda x: -0.5 + 0.1 * np.sin(x)), graph_arc(lambda x: 0.5 + 0.1 * np.cos(x)))
        spec = GridSpec(128, 128).window_for(pair)
        g = Grid.from_spec(spec, P)
        a_hi = cosh_fields.a1(0.0, max(abs(spec.ylo), abs(spec.yhi)))
        for eps in (0.05, 0.2):
            out = apply_T(pair, eps, MINUS, cosh_fields, spec)
            sep = float(np.min(distances_to_arc(out.gamma1.vertices, out.gamma2)))
            assert sep >= 2 * eps / a_hi - g.h

    def test_monotone_on_nested_flat_pairs(self, cosh_fields):
        A, B = flat_pair(-0.6, 0.3), flat_pair(-0.5, 0.35)
        spec = GridSpec(128, 128).window_for(A, B)
        g = Grid.from_spec(spec, P)
        for sign in (PLUS, MINUS):
            assert pair_le(apply_T(A, 0.05, sign, cosh_fields, g), apply_T(B, 0.05, sign, cosh_fields, g), slack=g.h)

    def test_output_length(self, cosh_fields):
        pair = flat_pair(-0.5, 0.5)
        out = apply_T(pair, 0.05, MINUS, cosh_fields, GridSpec(64, 64).window_for(pair), n_out=100)
        assert out.gamma1.n == 100 and out.gamma2.n == 100
