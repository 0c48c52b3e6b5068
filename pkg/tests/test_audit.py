"""
Tests for the inequality audit and the counterexample suite
"""

import dataclasses

import pytest

from src.analytic import OUTCOME_COLUMNS
from src.audit import (
    COMPLEMENT_INEQUALITY,
    INEQUALITIES,
    InequalityAuditor,
    implied_closure,
    non_implied_pairs,
)
from tests.conftest import binary


@pytest.fixture(scope="module")
def auditor(analyzer):
    return InequalityAuditor(analyzer)


@pytest.fixture(scope="module")
def suite(auditor):
    return auditor.counterexample_suite()


class TestClosure:
    def test_closure_adds_two_relations(self):
        closure = implied_closure()
        assert len(closure) == 12
        assert set(INEQUALITIES) <= closure
        assert COMPLEMENT_INEQUALITY in closure
        assert ('P', 'S1') in closure
        assert ('Pm', 'S1') in closure

    def test_remaining_pairs(self):
        pairs = non_implied_pairs()
        assert len(pairs) == len(OUTCOME_COLUMNS) * (len(OUTCOME_COLUMNS) - 1) - 12
        assert ('N', 'P') in pairs
        assert ('S2', 'S1') not in pairs


class TestVerify:
    def test_random_laws_satisfy_every_relation(self, auditor):
        summary = auditor.random_audit(50, seed=2024)
        assert summary.failures == []
        assert summary.passed + len(summary.errors) == 50
        assert summary.worst_margin == 0.0

    @pytest.mark.slow
    def test_full_random_audit(self, auditor):
        summary = auditor.random_audit(10000, seed=7)
        assert summary.failures == []
        assert summary.errors == []
        assert summary.passed == 10000

    def test_fabricated_violation_is_reported(self, auditor, analyzer):
        dist = binary(0.5)
        outcomes = analyzer.outcomes(dist)
        broken = dataclasses.replace(outcomes, d=0.5, d_mis=0.1)
        result = auditor.verify_inequalities(dist, outcomes=broken)
        assert not result.passed
        assert [v['relation'] for v in result.violations] == ['D <= Dm']
        assert result.violations[0]['margin'] == pytest.approx(0.4)

    def test_real_outcomes_pass(self, auditor):
        assert auditor.verify_inequalities(binary(0.9)).passed


class TestSuite:
    def test_every_case_meets_its_claims(self, suite):
        assert len(suite) == 10
        for case in suite:
            assert case.claims, case.name
            assert case.claims_hold, (case.name, case.claims)

    def test_orderings_list_every_outcome(self, suite):
        for case in suite:
            assert sorted(case.ordering) == sorted(OUTCOME_COLUMNS)
            values = [case.outcomes[k] for k in case.ordering]
            assert values == sorted(values, reverse=True)

    def test_every_non_implied_relation_is_refuted(self, auditor, suite):
        refuted = auditor.refute_non_implied(suite)
        assert len(refuted) == 78
        assert [k for k, v in refuted.items() if v is None] == []

    def test_empty_suite_refutes_nothing(self, auditor):
        refuted = auditor.refute_non_implied([])
        assert set(refuted.values()) == {None}


class TestCoefficients:
    def test_near_certain_branching_expansions(self, auditor):
        checks = auditor.coefficient_checks()
        assert [c.quantity for c in checks] == ['N', 'S2', 'P', 'Nm']
        for check in checks:
            assert check.passed, (check.quantity, check.estimated)
