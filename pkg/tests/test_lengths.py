"""
Tests for expected game length and the reduced-tree diagnostics
"""

import math

import pytest

from src.analytic import GameId
from src.exceptions import DrawPositiveError, UsageError
from src.lengths import LengthAnalyzer
from src.offspring import random_distribution
from tests.conftest import T_NORMAL, binary


@pytest.fixture(scope="module")
def lengths(analyzer, simulator):
    return LengthAnalyzer(analyzer, simulator)


class TestExpectedLength:
    def test_subcritical_binary_converges(self, lengths):
        report = lengths.expected_T(binary(0.5), GameId.NORMAL)
        assert not report.divergent
        assert report.converged
        assert report.e_T == pytest.approx(report.e_T_raw - 1.0)
        assert report.partial_sums[0] == 1.0
        assert report.tail_ratio == pytest.approx((math.sqrt(2.0) - 1.0) ** 2, abs=1e-3)

    def test_matches_monte_carlo_moves(self, lengths, simulator):
        dist = binary(0.5)
        report = lengths.expected_T(dist, GameId.NORMAL)
        mc = simulator.monte_carlo(dist, GameId.NORMAL, 40, 4000, seed=23)
        assert mc.mean_T == pytest.approx(report.e_T, abs=0.15)

    def test_misere_converges(self, lengths):
        report = lengths.expected_T(binary(0.5), GameId.MISERE)
        assert not report.divergent
        assert report.e_T > 0.0

    def test_draws_make_the_series_diverge(self, lengths):
        report = lengths.expected_T(binary(0.9), GameId.NORMAL)
        assert report.divergent
        assert report.e_T is None
        assert report.draw_probability > 0.0
        assert report.notes == ['draw probability positive']

    def test_grows_towards_the_draw_threshold(self, lengths):
        values = [lengths.expected_T(binary(t), GameId.NORMAL).e_T for t in (0.7, 0.8, 0.83, 0.85, 0.86)]
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_truncated_series_reports_error_bound(self, lengths):
        report = lengths.expected_T(binary(0.86), GameId.NORMAL, n_max=50)
        assert not report.converged
        assert report.terms == 50
        assert report.error_bound > 0.0

    def test_finite_for_interior_draw_free_laws(self, lengths, analyzer):
        checked = 0
        for seed in range(1000):
            dist = random_distribution(seed, 3)
            out = analyzer.outcomes(dist)
            if out.summary()['D'] > 0.0 or abs(out.diagnostics.slope + 1.0) < 0.05:
                continue
            report = lengths.expected_T(dist, GameId.NORMAL)
            assert not report.divergent, dist
            assert report.converged, dist
            assert math.isfinite(report.e_T) and report.e_T >= 0.0
            checked += 1
            if checked == 50:
                break
        assert checked == 50

    def test_escape_has_no_length(self, lengths):
        with pytest.raises(UsageError):
            lengths.expected_T(binary(0.5), GameId.ESCAPE)


class TestReducedTree:
    def test_grandchild_mean_closed_forms(self, lengths):
        assert lengths.grandchild_mean(binary(0.5), GameId.NORMAL) == \
            pytest.approx((math.sqrt(2.0) - 1.0) ** 2, abs=1e-10)
        assert lengths.grandchild_mean(binary(0.5), GameId.MISERE) == \
            pytest.approx((math.sqrt(3.0) - 1.0) ** 2, abs=1e-10)

    def test_grandchild_mean_reaches_one_at_threshold(self, lengths):
        value = lengths.grandchild_mean(binary(T_NORMAL - 1e-7), GameId.NORMAL)
        assert value == pytest.approx(1.0, abs=1e-4)
        assert value < 1.0

    def test_grandchild_mean_rejects_draws(self, lengths):
        with pytest.raises(DrawPositiveError):
            lengths.grandchild_mean(binary(0.9), GameId.NORMAL)
        assert lengths.grandchild_mean(binary(0.9), GameId.NORMAL, strict=False) > 0.0

    @pytest.mark.parametrize("game", [GameId.NORMAL, GameId.MISERE])
    def test_two_type_factorization(self, lengths, game):
        dist = binary(0.6)
        product = lengths.reduced_mean_children(dist, game) * lengths.reduced_p1(dist, game)
        assert product == pytest.approx(lengths.grandchild_mean(dist, game), rel=1e-10)

    @pytest.mark.parametrize("game", [GameId.NORMAL, GameId.MISERE])
    def test_reduced_offspring_law_sums_to_one(self, lengths, game):
        dist = binary(0.5)
        total = sum(lengths.reduced_offspring_pmf(dist, game, k) for k in range(4))
        assert total == pytest.approx(1.0, abs=1e-10)

    def test_misere_reduced_law_has_no_leaves(self, lengths):
        assert lengths.reduced_offspring_pmf(binary(0.5), GameId.MISERE, 0) == 0.0
        assert lengths.reduced_offspring_pmf(binary(0.5), GameId.NORMAL, 0) > 0.0


class TestTstar:
    def test_monte_carlo_tstar(self, lengths):
        estimate = lengths.expected_Tstar_mc(binary(0.5), GameId.NORMAL, 30, 500, seed=3)
        assert estimate.samples_used == 500
        assert estimate.mean is not None and estimate.mean >= 0.0
        assert estimate.censored_fraction < 0.05
        assert estimate.depth_cutoff == 30

    @pytest.mark.slow
    def test_tstar_grows_towards_the_draw_threshold(self, lengths):
        estimates = [lengths.expected_Tstar_mc(binary(t), GameId.NORMAL, 14, 3000, seed=31)
                     for t in (0.80, 0.83, 0.85, 0.86)]
        means = [e.mean for e in estimates]
        assert all(a < b for a, b in zip(means, means[1:])), means
        e_ts = [lengths.expected_T(binary(t), GameId.NORMAL).e_T for t in (0.80, 0.83, 0.85, 0.86)]
        assert all(m <= e_t + 0.1 for m, e_t in zip(means, e_ts))

    def test_length_report_collects_diagnostics(self, lengths):
        report = lengths.length_report(binary(0.5), GameId.NORMAL, depth_cutoff=20,
                                       n_samples=200, seed=4)
        assert report.grandchild_mean == pytest.approx((math.sqrt(2.0) - 1.0) ** 2, abs=1e-10)
        assert report.reduced_p1 is not None
        assert report.tstar is not None and report.tstar.samples_used == 200

    def test_length_report_skips_diagnostics_when_divergent(self, lengths):
        report = lengths.length_report(binary(0.9), GameId.NORMAL)
        assert report.divergent
        assert report.grandchild_mean is None
        assert report.tstar is None
