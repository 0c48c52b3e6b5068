"""
Inequality Audit
Checks the ordering relations between the ten outcome probabilities and reproduces the
counterexamples showing that no further relations hold
"""

from dataclasses import dataclass, field
from itertools import product
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

from src.analytic import OUTCOME_COLUMNS, FixedPointAnalyzer, GameOutcomes
from src.exceptions import GWGamesError
from src.offspring import OffspringDistribution, finite, finite_sparse, k_family, random_distribution
from src.utils.logger import GamesLogger
from src.utils.seeding import derive_sample_seed

Pair = Tuple[str, str]

# (a, b) reads a <= b
INEQUALITIES: Tuple[Pair, ...] = (
    ('N', 'S1'), ('Nm', 'S1'), ('P', 'S2'), ('Pm', 'S2'),
    ('S2', 'S1'), ('Pm', 'Nm'),
    ('Pm', 'P'), ('Pm', 'N'), ('D', 'Dm'),
)
# Complement of S2 <= S1 under E1 = 1 - S2 and E2 = 1 - S1
COMPLEMENT_INEQUALITY: Pair = ('E2', 'E1')

DEFAULT_TOL = 1e-9


@dataclass
class AuditResult:
    """Outcome of checking every inequality on one distribution"""

    descriptor: str
    outcomes: Dict[str, float]
    violations: List[Dict[str, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


@dataclass
class SuiteCase:
    name: str
    descriptor: str
    outcomes: Dict[str, float]
    ordering: List[str]
    claims: Dict[str, bool]

    @property
    def claims_hold(self) -> bool:
        return all(self.claims.values())


@dataclass
class RandomAuditSummary:
    count: int
    seed: int
    max_support: int
    passed: int
    failures: List[AuditResult] = field(default_factory=list)
    errors: List[Dict[str, str]] = field(default_factory=list)
    worst_margin: float = 0.0


@dataclass
class CoefficientCheck:
    quantity: str
    claimed: Tuple[float, float]
    estimated: Tuple[float, float]
    tolerance: Tuple[float, float]

    @property
    def passed(self) -> bool:
        return all(abs(e - c) <= t for e, c, t in zip(self.estimated, self.claimed, self.tolerance))


def implied_closure() -> FrozenSet[Pair]:
    """Transitive closure of the proven relations"""
    closure = set(INEQUALITIES) | {COMPLEMENT_INEQUALITY}
    changed = True
    while changed:
        changed = False
        for (a, b), (c, d) in product(list(closure), repeat=2):
            if b == c and a != d and (a, d) not in closure:
                closure.add((a, d))
                changed = True
    return frozenset(closure)


def non_implied_pairs() -> List[Pair]:
    closure = implied_closure()
    return [(a, b) for a in OUTCOME_COLUMNS for b in OUTCOME_COLUMNS
            if a != b and (a, b) not in closure]


def _ordering(values: Dict[str, float]) -> List[str]:
    return sorted(values, key=lambda k: (-values[k], OUTCOME_COLUMNS.index(k)))


class InequalityAuditor:
    """Runs the inequality audit and the counterexample suite"""

    def __init__(self, analyzer: Optional[FixedPointAnalyzer] = None):
        self.logger = GamesLogger.get_logger('audit')
        self.analyzer = analyzer or FixedPointAnalyzer()
        self.logger.debug("InequalityAuditor initialized")

    def verify_inequalities(self, dist: OffspringDistribution, tol: float = DEFAULT_TOL,
                            outcomes: Optional[GameOutcomes] = None) -> AuditResult:
        """
        Check all nine relations (and the implied E2 <= E1)

        Args:
            dist: Offspring distribution
            tol: Violations smaller than this are ignored
            outcomes: Precomputed outcomes for dist

        Returns:
            AuditResult listing each violated relation with its margin
        """
        values = (outcomes or self.analyzer.outcomes(dist)).values()
        result = AuditResult(descriptor=str(dist), outcomes=values)
        for a, b in INEQUALITIES + (COMPLEMENT_INEQUALITY,):
            margin = values[a] - values[b]
            if margin > tol:
                result.violations.append({'relation': f"{a} <= {b}", 'margin': margin})
        if not result.passed:
            self.logger.warning(f"Inequality violations for {dist}: {result.violations}")
        return result

    # ------------------------------------------------------------------ suite

    @staticmethod
    def suite_distributions() -> List[Tuple[str, OffspringDistribution]]:
        eps = 0.001
        return [
            ('p0=1', finite([1.0])),
            ('p0=0', finite([0.0, 0.5, 0.5])),
            ('K=100', k_family(100)),
            ('K=1000', k_family(1000)),
            ('binary(0.5)', finite([0.5, 0.0, 0.5])),
            ('binary(0.8)', finite([0.2, 0.0, 0.8])),
            ('binary(0.9)', finite([0.1, 0.0, 0.9])),
            ('binary(0.99)', finite([0.01, 0.0, 0.99])),
            ('binary(0.999)', finite([0.001, 0.0, 0.999])),
            ('eps-two-thirds', finite_sparse({0: eps, 1: 2.0 / 3.0, 3: 1.0 / 3.0 - eps})),
        ]

    @staticmethod
    def _claims(name: str, v: Dict[str, float]) -> Dict[str, bool]:
        if name == 'p0=1':
            return {f"{k} = 1": abs(v[k] - 1.0) < DEFAULT_TOL for k in ('P', 'Nm', 'S1', 'S2')}
        if name == 'p0=0':
            return {f"{k} = 1": abs(v[k] - 1.0) < DEFAULT_TOL for k in ('D', 'Dm', 'E1', 'E2')}
        if name.startswith('K='):
            claims = {f"{k} >= 0.9": v[k] >= 0.9 for k in ('N', 'Nm', 'E1', 'S1')}
            claims.update({f"{k} <= 0.1": v[k] <= 0.1 for k in ('P', 'D', 'Pm', 'Dm', 'S2', 'E2')})
            return claims
        if name in ('binary(0.99)', 'binary(0.999)'):
            eps = 0.01 if name == 'binary(0.99)' else 0.001
            return {
                'N > S2 > P > Nm': v['N'] > v['S2'] > v['P'] > v['Nm'],
                '|N - 2eps| <= 10eps^2': abs(v['N'] - 2.0 * eps) <= 10.0 * eps ** 2,
            }
        if name == 'eps-two-thirds':
            return {'D = Dm = 0': v['D'] < DEFAULT_TOL and v['Dm'] < DEFAULT_TOL,
                    'E2 > Dm': v['E2'] > v['Dm'] + DEFAULT_TOL}
        if name == 'binary(0.5)':
            return {'D = Dm = 0': v['D'] < DEFAULT_TOL and v['Dm'] < DEFAULT_TOL,
                    'Pm > 0': v['Pm'] > DEFAULT_TOL}
        if name == 'binary(0.8)':
            return {'D = 0': v['D'] < DEFAULT_TOL, 'Dm > 0': v['Dm'] > DEFAULT_TOL}
        if name == 'binary(0.9)':
            return {'D > 0': v['D'] > DEFAULT_TOL, 'E1 = 0': v['E1'] < DEFAULT_TOL}
        return {}

    def counterexample_suite(self) -> List[SuiteCase]:
        """Evaluate the fixed counterexample cases with their claimed properties"""
        cases = []
        for name, dist in self.suite_distributions():
            values = self.analyzer.outcomes(dist).summary()
            claims = self._claims(name, values)
            cases.append(SuiteCase(name=name, descriptor=str(dist), outcomes=values,
                                   ordering=_ordering(values), claims=claims))
            if not all(claims.values()):
                self.logger.warning(f"Suite case {name} fails claims: "
                                    f"{[k for k, ok in claims.items() if not ok]}")
        return cases

    def refute_non_implied(self, cases: Sequence[SuiteCase],
                           tol: float = DEFAULT_TOL) -> Dict[str, Optional[str]]:
        """
        Map each relation a <= b outside the closure to a case where a > b

        Returns:
            {"a <= b": case name or None when no case refutes it}
        """
        refuted: Dict[str, Optional[str]] = {}
        for a, b in non_implied_pairs():
            refuted[f"{a} <= {b}"] = next(
                (case.name for case in cases if case.outcomes[a] - case.outcomes[b] > tol), None
            )
        missing = [k for k, v in refuted.items() if v is None]
        if missing:
            self.logger.warning(f"Relations not refuted by the suite: {missing}")
        return refuted

    # ------------------------------------------------------------------ random audit

    def random_audit(self, count: int, seed: int, max_support: int = 8,
                     tol: float = DEFAULT_TOL) -> RandomAuditSummary:
        """
        verify_inequalities over seeded random distributions

        Args:
            count: Number of distributions
            seed: Master seed; distribution i uses a seed derived from (seed, i)
            max_support: Largest offspring count
            tol: Violation tolerance

        Returns:
            RandomAuditSummary
        """
        summary = RandomAuditSummary(count=count, seed=seed, max_support=max_support, passed=0)
        for i in range(count):
            dist = random_distribution(derive_sample_seed(seed, i), max_support)
            try:
                result = self.verify_inequalities(dist, tol)
            except GWGamesError as e:
                GamesLogger.log_error('InequalityAuditor.random_audit', e, {'index': i})
                summary.errors.append({'index': str(i), 'descriptor': str(dist), 'error': str(e)})
                continue
            if result.passed:
                summary.passed += 1
            else:
                summary.failures.append(result)
                summary.worst_margin = max(summary.worst_margin,
                                           max(v['margin'] for v in result.violations))
        self.logger.info(f"Random audit: {summary.passed}/{count} passed")
        return summary

    # ------------------------------------------------------------------ asymptotics

    def coefficient_checks(self, eps_pair: Tuple[float, float] = (1e-2, 1e-3)) -> List[CoefficientCheck]:
        """
        First two eps-coefficients of N, S2, P and Nm for Binary(1 - eps)

        Each coefficient is estimated from two eps values with Richardson elimination of
        the next order term.
        """
        e1, e2 = eps_pair
        claimed = {'N': (2.0, 5.0), 'S2': (1.0, 9.0), 'P': (1.0, 4.0), 'Nm': (1.0, 2.0)}
        values = {}
        for eps in eps_pair:
            values[eps] = self.analyzer.outcomes(finite([eps, 0.0, 1.0 - eps])).values()

        def richardson(g1: float, g2: float) -> float:
            return (e1 * g2 - e2 * g1) / (e1 - e2)

        checks = []
        for quantity, (a, b) in claimed.items():
            f1, f2 = values[e1][quantity], values[e2][quantity]
            lead = richardson(f1 / e1, f2 / e2)
            second = richardson((f1 - a * e1) / e1 ** 2, (f2 - a * e2) / e2 ** 2)
            checks.append(CoefficientCheck(
                quantity=quantity,
                claimed=(a, b),
                estimated=(lead, second),
                tolerance=(200.0 * e1 * e2, 0.5),
            ))
        return checks
