"""
Game Length Analysis
Expected game length from the truncated-game series and reduced-tree diagnostics
"""

from dataclasses import dataclass, field
from typing import List, Optional

from src.analytic import FixedPointAnalyzer, GameId, MapId
from src.config import Config
from src.exceptions import DrawPositiveError, UsageError
from src.offspring import OffspringDistribution
from src.simulate import MonteCarloSimulator
from src.utils.logger import GamesLogger


@dataclass
class TstarEstimate:
    mean: Optional[float]
    stderr: Optional[float]
    censored_fraction: float
    samples_used: int
    depth_cutoff: int


@dataclass
class LengthReport:
    """
    Expected length of the normal or misère game.

    e_T_raw is the sum of D_n over n >= 0, which counts the root index; e_T = e_T_raw - 1
    is the expected number of moves. Both are None when the series diverges.
    """

    game: GameId
    divergent: bool
    e_T: Optional[float]
    e_T_raw: Optional[float]
    partial_sums: List[float]
    tail_ratio: Optional[float]
    error_bound: Optional[float]
    converged: bool
    draw_probability: float
    grandchild_mean: Optional[float] = None
    reduced_mean_children: Optional[float] = None
    reduced_p1: Optional[float] = None
    tstar: Optional[TstarEstimate] = None
    notes: List[str] = field(default_factory=list)

    @property
    def terms(self) -> int:
        return len(self.partial_sums)


class LengthAnalyzer:
    """E[T] series, two-type branching diagnostics and Monte Carlo E[T*]"""

    def __init__(self, analyzer: Optional[FixedPointAnalyzer] = None,
                 simulator: Optional[MonteCarloSimulator] = None):
        self.logger = GamesLogger.get_logger('lengths')
        self.analyzer = analyzer or FixedPointAnalyzer()
        self.simulator = simulator or MonteCarloSimulator()
        self.logger.debug("LengthAnalyzer initialized")

    @staticmethod
    def _check_game(game: GameId) -> GameId:
        game = GameId(game)
        if game == GameId.ESCAPE:
            raise UsageError("game lengths are defined for the normal and misère games only")
        return game

    def _win_probabilities(self, dist: OffspringDistribution, game: GameId):
        """(next-player win, previous-player win, draw) probabilities"""
        map_id = MapId.F2 if game == GameId.NORMAL else MapId.H2
        lo, hi, _, _ = self.analyzer.fixed_point_extremes(dist, map_id)
        return lo, 1.0 - hi, hi - lo

    # ------------------------------------------------------------------ E[T]

    def expected_T(self, dist: OffspringDistribution, game: GameId,
                   n_max: Optional[int] = None, tol: float = 1e-12) -> LengthReport:
        """
        Sum the undecided probabilities D_n of the truncated games

        Args:
            dist: Offspring distribution
            game: normal or misere
            n_max: Maximum number of terms (defaults to Config.SERIES_MAX_TERMS)
            tol: Stop once D_n < tol * (1 - tail_ratio)

        Returns:
            LengthReport; divergent when draws are possible or the tail stops contracting
        """
        game = self._check_game(game)
        n_max = Config.SERIES_MAX_TERMS if n_max is None else n_max
        _, _, draw = self._win_probabilities(dist, game)
        draw_positive = draw > Config.POSITIVITY_THRESHOLD
        p0 = dist.p0
        shift = 0.0 if game == GameId.NORMAL else p0

        terms: List[float] = []
        partial: List[float] = []
        ratios: List[float] = []
        nxt = prv = 0.0
        total = 0.0
        converged = False
        ratio: Optional[float] = None
        for _ in range(n_max):
            d_n = max(1.0 - nxt - prv, 0.0)
            terms.append(d_n)
            total += d_n
            partial.append(total)
            if d_n == 0.0:
                converged = True
                break
            if len(terms) >= 3 and terms[-3] > 0.0:
                ratio = d_n / terms[-3]
                ratios.append(ratio)
                if ratio < 1.0 and d_n < tol * (1.0 - ratio):
                    converged = True
                    break
                window = ratios[-Config.DIVERGENCE_WINDOW:]
                if len(window) == Config.DIVERGENCE_WINDOW and min(window) >= Config.DIVERGENCE_RATIO:
                    break
            nxt, prv = 1.0 - dist.g(1.0 - prv) + shift, dist.g(nxt) - shift

        stalled = ratio is not None and ratio >= Config.DIVERGENCE_RATIO
        if draw_positive or (not converged and stalled):
            self.logger.info(f"E[T] diverges for {dist} ({game.value})")
            return LengthReport(
                game=game, divergent=True, e_T=None, e_T_raw=None, partial_sums=partial,
                tail_ratio=ratio, error_bound=None, converged=False, draw_probability=draw,
                notes=['draw probability positive'] if draw_positive else ['tail does not contract'],
            )

        error_bound = 0.0
        if not converged and ratio is not None:
            error_bound = 2.0 * terms[-1] / (1.0 - ratio)
            self.logger.warning(f"E[T] series truncated at {n_max} terms, error <= {error_bound:.3g}")
        report = LengthReport(
            game=game, divergent=False, e_T=total - 1.0, e_T_raw=total, partial_sums=partial,
            tail_ratio=ratio, error_bound=error_bound, converged=converged, draw_probability=draw,
        )
        GamesLogger.log_computation('expected_T', str(dist), {'game': game.value, 'e_T': report.e_T})
        return report

    # ------------------------------------------------------------------ two-type diagnostics

    def grandchild_mean(self, dist: OffspringDistribution, game: GameId, strict: bool = True) -> float:
        """
        Mean number of grandchildren of a previous-player-win node in the reduced tree

        Args:
            dist: Offspring distribution
            game: normal or misere
            strict: Reject distributions with positive draw probability

        Returns:
            G'(N)^2, or G'(N~)^2 for misère
        """
        game = self._check_game(game)
        nxt, _, draw = self._win_probabilities(dist, game)
        if strict and draw > Config.POSITIVITY_THRESHOLD:
            raise DrawPositiveError(f"{dist} has draw probability {draw:.6g} in the {game.value} game")
        slope = float(dist.g_prime(nxt))
        return slope * slope

    def reduced_mean_children(self, dist: OffspringDistribution, game: GameId) -> Optional[float]:
        """N G'(N) / P: mean next-player-win children of a kept previous-player-win node"""
        nxt, prv, _ = self._win_probabilities(dist, self._check_game(game))
        if prv <= 0.0:
            return None
        return nxt * float(dist.g_prime(nxt)) / prv

    def reduced_p1(self, dist: OffspringDistribution, game: GameId) -> Optional[float]:
        """P G'(N) / N: chance a kept next-player-win node keeps a child"""
        nxt, prv, _ = self._win_probabilities(dist, self._check_game(game))
        if nxt <= 0.0:
            return None
        return prv * float(dist.g_prime(nxt)) / nxt

    def reduced_offspring_pmf(self, dist: OffspringDistribution, game: GameId, k: int) -> float:
        """Offspring law p_k N^k / P of previous-player-win nodes in the reduced tree"""
        game = self._check_game(game)
        nxt, prv, _ = self._win_probabilities(dist, game)
        if prv <= 0.0 or k < 0 or (game == GameId.MISERE and k == 0):
            return 0.0
        return dist.probability(k) * nxt ** k / prv

    # ------------------------------------------------------------------ E[T*]

    def expected_Tstar_mc(self, dist: OffspringDistribution, game: GameId, depth_cutoff: int,
                          n_samples: int, seed: Optional[int] = None) -> TstarEstimate:
        """
        Monte Carlo mean height of the reduced tree over samples where it is not censored

        Args:
            dist: Offspring distribution
            game: normal or misere
            depth_cutoff: Truncation depth
            n_samples: Number of trees
            seed: Master seed

        Returns:
            TstarEstimate with the censored fraction
        """
        game = self._check_game(game)
        _, _, draw = self._win_probabilities(dist, game)
        if draw > Config.POSITIVITY_THRESHOLD:
            self.logger.warning(
                f"{dist} has draws in the {game.value} game; T* estimates are dominated by censoring"
            )
        mc = self.simulator.monte_carlo(dist, game, depth_cutoff, n_samples, seed)
        return TstarEstimate(
            mean=mc.mean_Tstar,
            stderr=mc.stderr_Tstar,
            censored_fraction=mc.Tstar_censored_fraction,
            samples_used=mc.samples_used,
            depth_cutoff=depth_cutoff,
        )

    def length_report(self, dist: OffspringDistribution, game: GameId,
                      n_max: Optional[int] = None, depth_cutoff: int = 0,
                      n_samples: int = 0, seed: Optional[int] = None) -> LengthReport:
        """expected_T with the two-type diagnostics and, when samples are requested, E[T*]"""
        report = self.expected_T(dist, game, n_max)
        if not report.divergent:
            report.grandchild_mean = self.grandchild_mean(dist, game)
            report.reduced_mean_children = self.reduced_mean_children(dist, game)
            report.reduced_p1 = self.reduced_p1(dist, game)
        if n_samples > 0:
            report.tstar = self.expected_Tstar_mc(dist, game, depth_cutoff, n_samples, seed)
        return report
