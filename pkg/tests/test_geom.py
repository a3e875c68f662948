import math

import numpy as np
import pytest
from scipy.integrate import quad

from bernoulli_forge.errors import InvalidArc, PeriodMismatch
from bernoulli_forge.geom import (
    ArcPair,
    Ordering,
    PeriodicArc,
    Point2,
    arc_length,
    clearance,
    compare,
    distance_to_arc,
    distances_to_arc,
    hausdorff,
    pair_le,
    read_arc_csv,
    resample,
    total_curvature,
    write_arc_csv,
)

from conftest import P, flat_arc, graph_arc


def square_wave():
    # plateau y=0 on [-1, 1], trough y=-1 elsewhere; four right angles per period
    return PeriodicArc([(-1.0, 0.0), (1.0, 0.0), (1.0, -1.0), (P - 1.0, -1.0)], P)


def sine(amp=0.1, n=512):
    return graph_arc(lambda x: amp * np.sin(x), n)


class TestConstruction:
    def test_rejects_too_few_vertices(self):
        with pytest.raises(InvalidArc):
            PeriodicArc([(0, 0), (1, 0)], P)

    def test_rejects_repeated_vertex(self):
        with pytest.raises(InvalidArc):
            PeriodicArc([(0, 0), (1, 0), (1, 0), (2, 0)], P)

    def test_rejects_self_crossing(self):
        # bow tie: the second edge crosses the fourth
        with pytest.raises(InvalidArc):
            PeriodicArc([(0, 0), (2, 1), (2, -1), (1, 1), (3, 0)], P)

    def test_rejects_nonpositive_period(self):
        with pytest.raises(InvalidArc):
            PeriodicArc([(0, 0), (1, 0), (2, 0)], 0.0)

    def test_point_rejects_nan(self):
        with pytest.raises(ValueError):
            Point2(math.nan, 0.0)

    def test_pair_requires_strict_order(self):
        with pytest.raises(InvalidArc):
            ArcPair(flat_arc(0.5), flat_arc(0.0))

    def test_period_mismatch(self):
        a = PeriodicArc.flat(0.0, P)
        b = PeriodicArc.flat(1.0, 2 * P)
        with pytest.raises(PeriodMismatch):
            compare(a, b)

    def test_vertical_edges_allowed(self):
        sq = square_wave()
        assert not sq.is_graph()
        assert sq.n == 4


class TestArcLength:
    def test_flat_line(self):
        assert arc_length(PeriodicArc.flat(0.0, P, 64)) == pytest.approx(2 * math.pi, rel=1e-14)

    def test_sine_against_quadrature(self):
        ref, _ = quad(lambda x: math.sqrt(1 + 0.01 * math.cos(x) ** 2), 0, 2 * math.pi, epsabs=1e-12)
        assert arc_length(sine(n=256)) == pytest.approx(ref, rel=5e-3)

    def test_refinement(self):
        assert arc_length(sine(n=32)) == pytest.approx(arc_length(sine(n=512)), rel=1e-2)


class TestCurvature:
    def test_flat_line(self):
        assert total_curvature(PeriodicArc.flat(0.3, P)) == pytest.approx(0.0, abs=1e-14)

    def test_sine_against_quadrature(self):
        # integral of |kappa| ds = integral of |y''| / (1 + y'^2) dx
        ref, _ = quad(lambda x: abs(0.1 * math.sin(x)) / (1 + 0.01 * math.cos(x) ** 2), 0, 2 * math.pi, points=[math.pi], epsabs=1e-12)
        assert total_curvature(sine(n=512)) == pytest.approx(ref, rel=2e-2)

    def test_square_wave(self):
        assert total_curvature(square_wave()) == pytest.approx(2 * math.pi, rel=1e-12)


class TestCompare:
    def test_strict_less(self):
        assert compare(flat_arc(0.0), flat_arc(0.5)) is Ordering.StrictLess
        assert compare(flat_arc(0.5), flat_arc(0.0)) is Ordering.StrictGreater

    def test_equal_to_itself(self):
        s = sine()
        assert compare(s, s) is Ordering.Equal
        assert Ordering.Equal.is_le() and Ordering.Equal.is_ge()

    def test_crossing_curves_incomparable(self):
        assert compare(sine(0.2), sine(-0.2)) is Ordering.Incomparable

    def test_touching_is_weak(self):
        # the sine touches y=0.1 at its crests
        top = flat_arc(0.1)
        assert compare(sine(0.1), top) is Ordering.WeakLess
        assert compare(top, sine(0.1)) is Ordering.WeakGreater

    def test_pair_le(self):
        assert pair_le(ArcPair(flat_arc(0), flat_arc(1)), ArcPair(flat_arc(0.2), flat_arc(1.1)))
        assert not pair_le(ArcPair(flat_arc(0.3), flat_arc(1)), ArcPair(flat_arc(0.2), flat_arc(1.1)))

    def test_clearance_of_flat_lines(self):
        assert clearance(flat_arc(0.0), flat_arc(0.25)) == pytest.approx(0.25)
        assert clearance(flat_arc(0.25), flat_arc(0.0)) == pytest.approx(-0.25)


class TestDistance:
    def test_flat(self):
        assert distance_to_arc((1.0, 0.3), PeriodicArc.flat(0.0, P)) == pytest.approx(0.3)

    def test_point_on_arc(self):
        s = sine()
        assert distance_to_arc(tuple(s.vertices[7]), s) == 0.0
        assert distance_to_arc(Point2(*s.vertices[3]), s) == 0.0

    def test_square_wave_against_dense_samples(self):
        sq = square_wave()
        # brute force over a dense sampling of three period copies
        c = sq.closed()
        pts = []
        for k in (-1, 0, 1):
            for a, b in zip(c[:-1], c[1:]):
                t = np.linspace(0, 1, 2001)[:, None]
                pts.append(a + t * (b - a) + (k * P, 0))
        pts = np.vstack(pts)
        for p in [(0.0, 0.5), (1.3, -0.2), (3.0, 0.4), (-1.2, -0.5)]:
            ref = float(np.min(np.hypot(pts[:, 0] - p[0], pts[:, 1] - p[1])))
            assert distance_to_arc(p, sq) == pytest.approx(ref, abs=2e-3)
        assert distance_to_arc((0.0, 0.5), sq) == pytest.approx(0.5, abs=1e-14)
        assert distance_to_arc((P, 0.5), sq) == distance_to_arc((0.0, 0.5), sq)
        assert distance_to_arc((-3 * P, 0.5), sq) == pytest.approx(0.5, abs=1e-12)

    def test_vectorised_matches_scalar(self):
        s = sine()
        pts = np.array([[0.3, 0.5], [2.0, -0.4], [5.5, 0.05]])
        d = distances_to_arc(pts, s)
        assert d == pytest.approx([distance_to_arc(p, s) for p in pts])


class TestHausdorff:
    def test_flat_lines(self):
        assert hausdorff(flat_arc(0.0), flat_arc(0.25)) == pytest.approx(0.25)

    def test_self(self):
        assert hausdorff(sine(), sine()) == 0.0

    def test_sine_against_flat(self):
        assert hausdorff(flat_arc(0.0, 512), sine(0.1, 512)) == pytest.approx(0.1, rel=1e-3)


class TestResample:
    def test_flat_even_spacing(self):
        r = resample(PeriodicArc.flat(0.0, P, 64), 16)
        assert r.n == 16
        assert np.diff(r.closed()[:, 0]) == pytest.approx(np.full(16, P / 16))
        assert np.all(r.vertices[:, 1] == 0.0)

    def test_points_stay_on_curve(self):
        s = sine(0.3, 128)
        r = resample(s, 50)
        assert np.max(distances_to_arc(r.vertices, s)) < 1e-12

    def test_idempotent(self):
        s = resample(sine(0.3, 128), 64)
        assert hausdorff(resample(s, 64), s) < 1e-9

    def test_rejects_tiny_n(self):
        with pytest.raises(ValueError):
            resample(sine(), 4)


class TestSerialisation:
    def test_csv_roundtrip(self, tmp_path):
        s = sine(0.2, 100)
        write_arc_csv(tmp_path / "arc.csv", s)
        back = read_arc_csv(tmp_path / "arc.csv")
        assert back.period == s.period
        assert np.array_equal(back.vertices, s.vertices)

    def test_csv_has_header(self, tmp_path):
        write_arc_csv(tmp_path / "arc.csv", flat_arc(0.0, 8))
        lines = (tmp_path / "arc.csv").read_text().splitlines()
        assert lines[1] == "t,x,y"
