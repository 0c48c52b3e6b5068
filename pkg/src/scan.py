"""
Phase Transition Scanner
Locates critical parameters of one-parameter families and classifies the transitions
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.analytic import (
    OUTCOME_COLUMNS,
    ComposedMap,
    FixedPointAnalyzer,
    GameId,
    MapId,
    decreasing_fixed_point,
)
from src.config import Config
from src.exceptions import GWGamesError, MonotonicityError, UsageError
from src.offspring import Family, OffspringDistribution
from src.utils.logger import GamesLogger

# Local minima of the sampled curve are searched on this many cells
PROFILE_RESOLUTION = 10000
# mu*p1 is compared on both sides of the critical parameter at this offset
MU_P1_STEP = 1e-6

_GAME_MAPS = {GameId.NORMAL: MapId.F2, GameId.MISERE: MapId.H2, GameId.ESCAPE: MapId.FH}


class Classification(str, Enum):
    CONTINUOUS = 'continuous'
    DISCONTINUOUS = 'discontinuous'
    BOUNDARY_CROSSING_MU_P1 = 'boundary-crossing-mu-p1'
    INDETERMINATE = 'indeterminate'


@dataclass
class TransitionReport:
    """Location and type of one phase transition"""

    family_id: str
    game: GameId
    t_critical: float
    classification: Classification
    jump: float
    slope_diagnostic: float
    bracket_width: Optional[float] = None
    continuous: Optional[bool] = None
    mu_p1_crossing: bool = False
    deltas: List[float] = field(default_factory=list)
    order_values: List[float] = field(default_factory=list)


@dataclass
class LocalMinimumProfile:
    table: pd.DataFrame
    monotone: bool


def escape_criterion(dist: OffspringDistribution) -> float:
    """mu * p1; values above 1 force a positive escape probability"""
    return dist.mean() * dist.p1


def binomial_draw_threshold(n: int) -> float:
    """Success probability above which Binomial(n, p) has normal-play draws"""
    if n < 1:
        raise UsageError("n must be at least 1")
    return (n + 1) ** (n - 1) / n ** n


def slope_diagnostic(dist: OffspringDistribution, game: GameId) -> float:
    """F'(x*) for the normal game, H'(x~*) for misère, mu*p1 for escape"""
    game = GameId(game)
    if game == GameId.ESCAPE:
        return escape_criterion(dist)
    fixed = decreasing_fixed_point(dist.f if game == GameId.NORMAL else dist.h)
    return -float(dist.g_prime(fixed))


def _curve_row(family: Family, t: float, settings: Tuple[float, int, int]) -> Dict[str, Any]:
    """One row of the ten-outcome table; worker entry point"""
    try:
        outcomes = FixedPointAnalyzer(*settings).outcomes(family.at(t))
        return {'t': t, **outcomes.summary()}
    except GWGamesError as e:
        GamesLogger.log_error('scan.scan_curve', e, {'family': family.describe(), 't': t})
        row: Dict[str, Any] = {'t': t}
        row.update({column: float('nan') for column in OUTCOME_COLUMNS})
        row['error'] = str(e)
        return row


class TransitionScanner:
    """Critical-parameter search and classification over one-parameter families"""

    def __init__(self, analyzer: Optional[FixedPointAnalyzer] = None, threads: Optional[int] = None):
        self.logger = GamesLogger.get_logger('scan')
        self.analyzer = analyzer or FixedPointAnalyzer()
        self.threads = Config.THREADS if threads is None else threads
        self.threshold = Config.POSITIVITY_THRESHOLD
        self.logger.debug("TransitionScanner initialized")

    # ------------------------------------------------------------------ order parameter

    def order_parameter(self, dist: OffspringDistribution, game: GameId) -> float:
        """
        D (normal), D~ (misère) or E1 (escape)

        Args:
            dist: Offspring distribution
            game: Game selector

        Returns:
            Raw order parameter, not thresholded
        """
        game = GameId(game)
        lo, hi, _, _ = self.analyzer.fixed_point_extremes(dist, _GAME_MAPS[game])
        if game == GameId.ESCAPE:
            s1 = self.analyzer.fixed_point_extremes(dist, MapId.HF)[0]
            return max(hi, float(dist.f(s1)))
        return hi - lo

    def _coarse_order_parameter(self, dist: OffspringDistribution, game: GameId) -> float:
        fps = self.analyzer.isolate_fixed_points(dist, _GAME_MAPS[game])
        return fps.max_fp if game == GameId.ESCAPE else fps.max_fp - fps.min_fp

    def _positive(self, family: Family, game: GameId, t: float, coarse: bool = False) -> bool:
        dist = family.at(t)
        value = self._coarse_order_parameter(dist, game) if coarse else self.order_parameter(dist, game)
        return value > self.threshold

    def _check_range(self, family: Family, t_lo: float, t_hi: float):
        lo, hi = family.parameter_range
        if not (lo <= t_lo < t_hi <= hi):
            raise UsageError(
                f"range [{t_lo}, {t_hi}] is not an increasing subinterval of [{lo}, {hi}] "
                f"for family {family.describe()}"
            )

    # ------------------------------------------------------------------ critical parameter

    def critical_bracket(self, family: Family, game: GameId, t_lo: float, t_hi: float,
                         tol_t: Optional[float] = None,
                         prescan_points: Optional[int] = None) -> Tuple[float, float]:
        """
        Bracket the parameter where the order parameter becomes positive

        Args:
            family: One-parameter family
            game: Game selector
            t_lo: Parameter with zero order parameter
            t_hi: Parameter with positive order parameter
            tol_t: Final bracket width (defaults to Config.BISECTION_TOL)
            prescan_points: Coarse pre-scan resolution (defaults to Config.PRESCAN_POINTS)

        Returns:
            (lo, hi) with hi - lo <= tol_t

        Raises:
            UsageError: endpoints do not straddle the transition
            MonotonicityError: the predicate switches more than once on the pre-scan
        """
        game = GameId(game)
        tol_t = Config.BISECTION_TOL if tol_t is None else tol_t
        points = Config.PRESCAN_POINTS if prescan_points is None else prescan_points
        self._check_range(family, t_lo, t_hi)
        if self._positive(family, game, t_lo):
            raise UsageError(f"order parameter is already positive at t_lo={t_lo}")
        if not self._positive(family, game, t_hi):
            raise UsageError(f"order parameter is zero at t_hi={t_hi}")

        grid = np.linspace(t_lo, t_hi, points + 1)
        flags = np.array([self._positive(family, game, t, coarse=True) for t in grid[1:-1]])
        flags = np.concatenate(([False], flags, [True]))
        switches = np.nonzero(flags[1:] != flags[:-1])[0]
        if switches.size > 1:
            sub = (float(grid[switches[0]]), float(grid[switches[1] + 1]))
            raise MonotonicityError(
                f"order-parameter predicate switches {switches.size} times on [{t_lo}, {t_hi}]; "
                f"scan [{sub[0]:.12g}, {sub[1]:.12g}] piecewise",
                sub,
            )

        lo, hi = float(grid[switches[0]]), float(grid[switches[0] + 1])
        # the coarse predicate can lag a tangential onset by a grid cell
        if lo > t_lo and self._positive(family, game, lo):
            lo = float(grid[max(switches[0] - 1, 0)])
        if hi < t_hi and not self._positive(family, game, hi):
            hi = float(grid[min(switches[0] + 2, points)])
        while hi - lo > tol_t:
            mid = 0.5 * (lo + hi)
            if self._positive(family, game, mid):
                hi = mid
            else:
                lo = mid
        self.logger.info(
            f"Critical parameter for {family.describe()}/{game.value} in [{lo:.12g}, {hi:.12g}]"
        )
        return lo, hi

    def critical_parameter(self, family: Family, game: GameId, t_lo: float, t_hi: float,
                           tol_t: Optional[float] = None) -> float:
        """Midpoint of the final bisection bracket"""
        lo, hi = self.critical_bracket(family, game, t_lo, t_hi, tol_t)
        return 0.5 * (lo + hi)

    # ------------------------------------------------------------------ classification

    def _mu_p1_crossing(self, family: Family, t: float) -> bool:
        lo, hi = family.parameter_range
        below = escape_criterion(family.at(max(t - MU_P1_STEP, lo))) - 1.0
        above = escape_criterion(family.at(min(t + MU_P1_STEP, hi))) - 1.0
        return below * above < 0.0 or abs(escape_criterion(family.at(t)) - 1.0) < MU_P1_STEP

    def classify_transition(self, family: Family, game: GameId, t_critical: float,
                            bracket_width: Optional[float] = None) -> TransitionReport:
        """
        Classify the transition at t_critical

        The order parameter is sampled at t_critical + delta for the configured deltas and
        extrapolated to delta = 0 by the cubic in sqrt(delta) through the four smallest
        samples. Limits below the classification threshold are continuous.

        Args:
            family: One-parameter family
            game: Game selector
            t_critical: Location from critical_parameter
            bracket_width: Width of the bisection bracket, echoed into the report

        Returns:
            TransitionReport
        """
        game = GameId(game)
        _, t_max = family.parameter_range
        deltas = [d for d in Config.CLASSIFY_DELTAS if t_critical + d <= t_max]
        values = [self.order_parameter(family.at(t_critical + d), game) for d in deltas]
        slope = slope_diagnostic(family.at(t_critical), game)
        crossing = game == GameId.ESCAPE and self._mu_p1_crossing(family, t_critical)

        report = TransitionReport(
            family_id=family.describe(),
            game=game,
            t_critical=t_critical,
            classification=Classification.INDETERMINATE,
            jump=0.0,
            slope_diagnostic=slope,
            bracket_width=bracket_width,
            mu_p1_crossing=crossing,
            deltas=deltas,
            order_values=values,
        )
        ordered = sorted(zip(deltas, values))
        if len(ordered) < 4:
            self.logger.warning(f"Too few samples above t={t_critical} to classify")
            return report
        steps = np.diff([v for _, v in ordered])
        if np.any(steps < -1e-12) and np.any(steps > 1e-12):
            self.logger.warning(f"Order parameter is not monotone above t={t_critical}")
            return report

        s = np.sqrt([d for d, _ in ordered[:4]])
        limit = float(np.polyval(np.polyfit(s, [v for _, v in ordered[:4]], 3), 0.0))
        report.jump = max(limit, 0.0)
        report.continuous = report.jump < Config.CLASSIFICATION_THRESHOLD
        if crossing:
            report.classification = Classification.BOUNDARY_CROSSING_MU_P1
        elif report.continuous:
            report.classification = Classification.CONTINUOUS
        else:
            report.classification = Classification.DISCONTINUOUS
        self.logger.info(
            f"{family.describe()}/{game.value} at t={t_critical:.12g}: "
            f"{report.classification.value}, jump={report.jump:.6g}"
        )
        return report

    def scan_transition(self, family: Family, game: GameId, t_lo: float, t_hi: float,
                        tol_t: Optional[float] = None) -> TransitionReport:
        """Locate then classify the transition between t_lo and t_hi"""
        lo, hi = self.critical_bracket(family, game, t_lo, t_hi, tol_t)
        return self.classify_transition(family, game, 0.5 * (lo + hi), bracket_width=hi - lo)

    def locate_jump(self, family: Family, game: GameId, t_lo: float, t_hi: float,
                    tol_t: Optional[float] = None) -> TransitionReport:
        """
        Locate a jump of the order parameter between two positive regimes

        Bisects toward the half with the larger increment. The reported jump is the
        increment across the final bracket.
        """
        game = GameId(game)
        tol_t = Config.BISECTION_TOL if tol_t is None else tol_t
        self._check_range(family, t_lo, t_hi)
        lo, hi = t_lo, t_hi
        v_lo = self.order_parameter(family.at(lo), game)
        v_hi = self.order_parameter(family.at(hi), game)
        while hi - lo > tol_t:
            mid = 0.5 * (lo + hi)
            v_mid = self.order_parameter(family.at(mid), game)
            if abs(v_hi - v_mid) >= abs(v_mid - v_lo):
                lo, v_lo = mid, v_mid
            else:
                hi, v_hi = mid, v_mid
        t_critical = 0.5 * (lo + hi)
        jump = abs(v_hi - v_lo)
        continuous = jump < Config.CLASSIFICATION_THRESHOLD
        return TransitionReport(
            family_id=family.describe(),
            game=game,
            t_critical=t_critical,
            classification=Classification.CONTINUOUS if continuous else Classification.DISCONTINUOUS,
            jump=jump,
            slope_diagnostic=slope_diagnostic(family.at(t_critical), game),
            bracket_width=hi - lo,
            continuous=continuous,
            order_values=[v_lo, v_hi],
        )

    # ------------------------------------------------------------------ curves

    def scan_curve(self, family: Family, t_grid: Sequence[float]) -> pd.DataFrame:
        """
        Ten outcome probabilities along a parameter grid

        Args:
            family: One-parameter family
            t_grid: Parameters inside the family range

        Returns:
            DataFrame with columns t,N,P,D,Nm,Pm,Dm,S1,S2,E1,E2; failed points are NaN
            rows and listed in DataFrame.attrs['errors']
        """
        lo, hi = family.parameter_range
        ts = [float(t) for t in t_grid]
        outside = [t for t in ts if not (lo <= t <= hi)]
        if outside:
            raise UsageError(f"grid points {outside[:3]} outside [{lo}, {hi}]")

        settings = (self.analyzer.tol, self.analyzer.max_iter, self.analyzer.grid_resolution)
        if self.threads > 1 and len(ts) > 1:
            with ProcessPoolExecutor(max_workers=self.threads) as executor:
                rows = list(executor.map(_curve_row, [family] * len(ts), ts, [settings] * len(ts)))
        else:
            rows = [_curve_row(family, t, settings) for t in ts]

        errors = [{'t': row['t'], 'error': row.pop('error')} for row in rows if 'error' in row]
        table = pd.DataFrame(rows, columns=['t'] + OUTCOME_COLUMNS)
        table.attrs['errors'] = errors
        if errors:
            self.logger.warning(f"{len(errors)} of {len(ts)} grid points failed")
        return table

    def local_minimum_profile(self, family: Family, map_id: MapId,
                              t_grid: Sequence[float]) -> LocalMinimumProfile:
        """
        Lowest interior local minimum of map(x) - x for each parameter

        Args:
            family: One-parameter family
            map_id: Composed map to inspect
            t_grid: Increasing parameters

        Returns:
            LocalMinimumProfile whose flag says the minimum value is nonincreasing in t
        """
        x = np.linspace(0.0, 1.0, PROFILE_RESOLUTION + 1)
        rows = []
        for t in t_grid:
            values = np.asarray(ComposedMap(family.at(t), MapId(map_id))(x), dtype=float) - x
            inner = np.arange(1, len(x) - 1)
            minima = inner[(values[inner] < values[inner - 1]) & (values[inner] <= values[inner + 1])]
            if minima.size:
                best = minima[np.argmin(values[minima])]
                rows.append({'t': float(t), 'x': float(x[best]), 'value': float(values[best])})
            else:
                rows.append({'t': float(t), 'x': float('nan'), 'value': float('nan')})
        table = pd.DataFrame(rows, columns=['t', 'x', 'value'])
        finite = table['value'].dropna().to_numpy()
        monotone = bool(finite.size > 0 and np.all(np.diff(finite) <= 1e-15))
        return LocalMinimumProfile(table=table, monotone=monotone)
