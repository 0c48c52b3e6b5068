"""
Tests for critical-parameter location, transition classification and outcome curves
"""

import math

import numpy as np
import pytest
from scipy.optimize import brentq

from src.analytic import GameId, MapId
from src.exceptions import MonotonicityError, UsageError
from src.offspring import parse_family, poisson
from src.scan import (
    Classification,
    binomial_draw_threshold,
    escape_criterion,
    slope_diagnostic,
)
from tests.conftest import E1_AT_ESCAPE_ONSET, T_ESCAPE, T_MISERE, T_NORMAL, binary


class TestDiagnostics:
    def test_escape_criterion(self):
        assert escape_criterion(poisson(2.0)) == pytest.approx(4.0 * math.exp(-2.0))
        assert escape_criterion(binary(0.9)) == 0.0

    @pytest.mark.parametrize("n,expected", [(1, 1.0), (2, 0.75), (3, 16.0 / 27.0)])
    def test_binomial_threshold(self, n, expected):
        assert binomial_draw_threshold(n) == pytest.approx(expected)

    def test_slope_diagnostic(self):
        x_star = (math.sqrt(2.0) - 1.0)
        assert slope_diagnostic(binary(0.5), GameId.NORMAL) == pytest.approx(-x_star, abs=1e-12)
        assert slope_diagnostic(binary(T_MISERE), GameId.MISERE) == pytest.approx(-1.0, abs=1e-12)
        assert slope_diagnostic(poisson(2.0), GameId.ESCAPE) == escape_criterion(poisson(2.0))


class TestCriticalParameter:
    def test_binary_normal(self, scanner, binary_family):
        t = scanner.critical_parameter(binary_family, GameId.NORMAL, 0.5, 1.0)
        assert t == pytest.approx(T_NORMAL, abs=1e-6)

    def test_binary_misere(self, scanner, binary_family):
        t = scanner.critical_parameter(binary_family, GameId.MISERE, 0.5, 1.0)
        assert t == pytest.approx(T_MISERE, abs=1e-6)

    def test_binary_escape(self, scanner, binary_family):
        lo, hi = scanner.critical_bracket(binary_family, GameId.ESCAPE, 0.5, 1.0)
        assert hi - lo <= 1e-10
        assert 0.5 * (lo + hi) == pytest.approx(T_ESCAPE, abs=1e-6)

    def test_poisson_normal_at_e(self, scanner):
        t = scanner.critical_parameter(parse_family("poisson"), GameId.NORMAL, 1.0, 5.0)
        assert t == pytest.approx(math.e, abs=1e-6)

    def test_poisson_misere(self, scanner):
        expected = brentq(lambda lam: math.log(lam) + lam * math.exp(-lam) - 1.0, 1.5, 3.0,
                          xtol=1e-14)
        t = scanner.critical_parameter(parse_family("poisson"), GameId.MISERE, 1.0, 5.0)
        assert t == pytest.approx(expected, abs=1e-6)

    def test_poisson_escape(self, scanner):
        t = scanner.critical_parameter(parse_family("poisson"), GameId.ESCAPE, 1.0, 5.0)
        assert t == pytest.approx(3.3185, abs=2e-3)

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_binomial_draw_boundary(self, scanner, n):
        t = scanner.critical_parameter(parse_family(f"binomial-{n}"), GameId.NORMAL, 0.4, 1.0)
        assert t == pytest.approx(binomial_draw_threshold(n), abs=1e-6)

    def test_endpoints_must_straddle(self, scanner, binary_family):
        with pytest.raises(UsageError):
            scanner.critical_bracket(binary_family, GameId.NORMAL, 0.9, 1.0)
        with pytest.raises(UsageError):
            scanner.critical_bracket(binary_family, GameId.NORMAL, 0.1, 0.5)
        with pytest.raises(UsageError):
            scanner.critical_bracket(binary_family, GameId.NORMAL, 0.8, 1.5)

    def test_repeated_switching_is_reported(self, scanner, binary_family, monkeypatch):
        def fake_positive(family, game, t, coarse=False):
            return 0.305 < t < 0.505 or t > 0.805

        monkeypatch.setattr(scanner, '_positive', fake_positive)
        with pytest.raises(MonotonicityError) as info:
            scanner.critical_bracket(binary_family, GameId.NORMAL, 0.0, 1.0, prescan_points=100)
        lo, hi = info.value.subinterval
        assert lo < 0.305 < hi


class TestClassification:
    def test_binary_normal_is_continuous(self, scanner, binary_family):
        report = scanner.scan_transition(binary_family, GameId.NORMAL, 0.5, 1.0)
        assert report.classification == Classification.CONTINUOUS
        assert report.continuous
        assert report.slope_diagnostic == pytest.approx(-1.0, abs=1e-5)

    def test_binary_escape_jumps(self, scanner, binary_family):
        report = scanner.scan_transition(binary_family, GameId.ESCAPE, 0.5, 1.0)
        assert report.classification == Classification.DISCONTINUOUS
        assert report.t_critical == pytest.approx(T_ESCAPE, abs=1e-6)
        assert report.jump == pytest.approx(E1_AT_ESCAPE_ONSET, abs=1e-6)
        assert not report.mu_p1_crossing

    def test_escape_value_at_and_just_above_onset(self, scanner, binary_family):
        at_onset = scanner.order_parameter(binary_family.at(T_ESCAPE), GameId.ESCAPE)
        assert at_onset == pytest.approx(E1_AT_ESCAPE_ONSET, abs=1e-6)
        value = scanner.order_parameter(binary_family.at(T_ESCAPE + 1e-7), GameId.ESCAPE)
        assert at_onset < value < at_onset + 1e-3
        below = scanner.order_parameter(binary_family.at(T_ESCAPE - 1e-6), GameId.ESCAPE)
        assert below < 1e-9

    @pytest.mark.parametrize("game", [GameId.NORMAL, GameId.MISERE])
    def test_poisson_draw_onsets_are_continuous(self, scanner, game):
        report = scanner.scan_transition(parse_family("poisson"), game, 1.0, 5.0)
        assert report.classification == Classification.CONTINUOUS
        assert report.jump < 1e-4

    def test_poisson_escape_is_discontinuous(self, scanner):
        report = scanner.scan_transition(parse_family("poisson"), GameId.ESCAPE, 1.0, 5.0)
        assert report.classification == Classification.DISCONTINUOUS

    def test_exotic1_draw_jump(self, scanner):
        report = scanner.scan_transition(parse_family("exotic1"), GameId.NORMAL, 0.95, 1.0)
        assert report.t_critical == pytest.approx(0.9791, abs=1e-3)
        assert report.classification == Classification.DISCONTINUOUS
        assert report.jump == pytest.approx(0.681, abs=0.01)

    def test_exotic3_escape_onset_crosses_mu_p1(self, scanner):
        family = parse_family("exotic3")
        t = scanner.critical_parameter(family, GameId.ESCAPE, -0.1, 0.05)
        assert t == pytest.approx(0.0, abs=1e-6)
        report = scanner.classify_transition(family, GameId.ESCAPE, t)
        assert report.mu_p1_crossing
        assert scanner._mu_p1_crossing(family, 0.03) is False

    def test_too_few_samples_is_indeterminate(self, scanner, binary_family):
        report = scanner.classify_transition(binary_family, GameId.NORMAL, 1.0 - 5e-5)
        assert report.classification == Classification.INDETERMINATE
        assert report.continuous is None

    def test_locate_jump_between_positive_regimes(self, scanner, binary_family):
        report = scanner.locate_jump(binary_family, GameId.ESCAPE, 0.9, 1.0, tol_t=1e-8)
        assert report.t_critical == pytest.approx(T_ESCAPE, abs=1e-6)
        assert report.classification == Classification.DISCONTINUOUS


class TestCurves:
    def test_scan_curve(self, scanner, binary_family):
        table = scanner.scan_curve(binary_family, [0.5, 0.9])
        assert list(table.columns)[:4] == ['t', 'N', 'P', 'D']
        assert len(table) == 2
        assert table.loc[0, 'D'] == 0.0
        assert table.loc[1, 'D'] == pytest.approx(math.sqrt(0.24) / 0.9, abs=1e-9)
        assert table.attrs['errors'] == []

    def test_scan_curve_rejects_outside_points(self, scanner, binary_family):
        with pytest.raises(UsageError):
            scanner.scan_curve(binary_family, [0.5, 1.5])

    def test_geometric_family_is_flat(self, scanner):
        table = scanner.scan_curve(parse_family("geometric"), np.linspace(0.1, 0.9, 9))
        assert (table[['D', 'Dm', 'E1', 'E2']] == 0.0).all().all()

    def test_exotic2_has_no_draws_near_its_quoted_transitions(self, scanner):
        table = scanner.scan_curve(parse_family("exotic2"), np.linspace(0.98, 0.995, 16))
        assert table.attrs['errors'] == []
        assert (table['D'] == 0.0).all()

    def test_local_minimum_profile(self, scanner, analyzer):
        profile = scanner.local_minimum_profile(parse_family("poisson"), MapId.F2, [3.0, 3.5, 4.0])
        assert list(profile.table.columns) == ['t', 'x', 'value']
        assert isinstance(profile.monotone, bool)
        row = profile.table.iloc[0]
        outcomes = analyzer.outcomes(poisson(3.0))
        assert row['value'] < 0.0
        assert outcomes.n < row['x'] < outcomes.diagnostics.x_star
