"""
Analytic Outcome Solver
Fixed points of the composed generating-function maps and the ten game outcome probabilities
"""

from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import brentq, minimize_scalar

from src.config import Config
from src.exceptions import FixedPointError, UsageError
from src.offspring import ArrayLike, OffspringDistribution
from src.utils.logger import GamesLogger

# Sign-change brackets are refined to this width
BRACKET_XTOL = 1e-13
# Roots closer than this are the same root
DEDUP_TOL = 1e-9
# Endpoints are fixed points when the map moves them by less than this
ENDPOINT_TOL = 1e-13
# Grid local minima of |residual| below this are refined for roots hidden inside one cell
DIP_SCAN_TOL = 1e-3
# A refined dip whose residual is within this of zero is a double root
DOUBLE_ROOT_TOL = 1e-12
# Refined dips closer to zero than this that are not roots are reported as possible tangencies
TANGENCY_TOL = 1e-6
# Double roots this close to x* are the pitchfork at x* itself
PITCHFORK_SNAP = 1e-6
# Largest accepted violation of the fixed-point identities between the outcome probabilities
IDENTITY_TOL = 1e-9
# |F'(x*) + 1| below this marks a critical (tangential) configuration
SLOPE_TANGENCY_TOL = 1e-8

OUTCOME_COLUMNS = ['N', 'P', 'D', 'Nm', 'Pm', 'Dm', 'S1', 'S2', 'E1', 'E2']


class GameId(str, Enum):
    NORMAL = 'normal'
    MISERE = 'misere'
    ESCAPE = 'escape'

    @classmethod
    def parse(cls, text: str) -> 'GameId':
        key = str(text).strip().lower().replace('è', 'e')
        aliases = {'normal': cls.NORMAL, 'misere': cls.MISERE, 'mis': cls.MISERE,
                   'escape': cls.ESCAPE}
        if key not in aliases:
            raise UsageError(f"unknown game {text!r}; expected normal, misere or escape")
        return aliases[key]


class MapId(str, Enum):
    F2 = 'F2'
    H2 = 'H2'
    FH = 'FH'
    HF = 'HF'
    F = 'F'
    H = 'H'


@dataclass(frozen=True)
class ComposedMap:
    """Handle for one of the maps F∘F, H∘H, F∘H, H∘F, F, H of a distribution"""

    dist: OffspringDistribution
    map_id: MapId

    def __call__(self, x: ArrayLike) -> ArrayLike:
        d = self.dist
        if self.map_id == MapId.F2:
            return d.f(d.f(x))
        if self.map_id == MapId.H2:
            return d.h(d.h(x))
        if self.map_id == MapId.FH:
            return d.f(d.h(x))
        if self.map_id == MapId.HF:
            return d.h(d.f(x))
        if self.map_id == MapId.F:
            return d.f(x)
        return d.h(x)


def _deflated_residual(dist: OffspringDistribution, map_id: MapId, x: ArrayLike) -> ArrayLike:
    """
    map(x) - x with its known trivial root divided out.

    F2: (F(x) - x) * (1 - G[x, F(x)])     H2: (H(x) - x) * (1 - G[x, H(x)])
    FH: x * (G[H(x), 1] * G[x, 0] - 1)    HF: (x - 1) * (G[F(x), 0] * G[x, 1] - 1)
    The second factors are returned. At x* the F2 factor equals 1 + F'(x*).
    """
    if map_id == MapId.F2:
        return 1.0 - dist.divided_difference(x, dist.f(x))
    if map_id == MapId.H2:
        return 1.0 - dist.divided_difference(x, dist.h(x))
    if map_id == MapId.FH:
        return dist.divided_difference(dist.h(x), 1.0) * dist.divided_difference(x, 0.0) - 1.0
    if map_id == MapId.HF:
        return dist.divided_difference(dist.f(x), 0.0) * dist.divided_difference(x, 1.0) - 1.0
    return ComposedMap(dist, map_id)(x) - x


def decreasing_fixed_point(fun: Callable[[float], float]) -> float:
    """Unique fixed point of a nonincreasing map of [0, 1] into itself"""
    at_zero = fun(0.0)
    if at_zero <= 0.0:
        return 0.0
    at_one = fun(1.0) - 1.0
    if at_one >= 0.0:
        return 1.0
    return float(brentq(lambda x: fun(x) - x, 0.0, 1.0, xtol=BRACKET_XTOL))


def _refine_dip(residual: Callable[[float], float], a: float, b: float,
                sign: float) -> Tuple[List[float], Optional[float]]:
    """
    Roots hidden between a and b, where residual has the same sign at both ends

    Returns the roots found and, when there are none, the location of a near miss
    closer to zero than TANGENCY_TOL.
    """
    best = minimize_scalar(lambda x: sign * residual(x), bounds=(a, b), method='bounded',
                           options={'xatol': BRACKET_XTOL})
    x_min, depth = float(best.x), float(best.fun)
    if depth < 0.0:
        return [float(brentq(residual, a, x_min, xtol=BRACKET_XTOL)),
                float(brentq(residual, x_min, b, xtol=BRACKET_XTOL))], None
    if depth <= DOUBLE_ROOT_TOL:
        return [x_min], None
    return [], (x_min if depth < TANGENCY_TOL else None)


def _dedupe(values: List[float]) -> Tuple[float, ...]:
    out: List[float] = []
    for v in sorted(values):
        if not out or v - out[-1] > DEDUP_TOL:
            out.append(v)
    return tuple(out)


@dataclass(frozen=True)
class FixedPointSet:
    """Fixed points in [0, 1] of one composed map, with the x* diagnostics"""

    map_id: MapId
    min_fp: float
    max_fp: float
    all_fps: Tuple[float, ...]
    x_star: float
    slope_at_x_star: float
    unresolved_tangencies: Tuple[float, ...] = ()
    identity: bool = False

    @property
    def tangential(self) -> bool:
        return abs(self.slope_at_x_star + 1.0) < SLOPE_TANGENCY_TOL

    def as_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['map_id'] = self.map_id.value
        data['tangential'] = self.tangential
        if self.unresolved_tangencies:
            data['note'] = 'possible tangential roots unresolved at this resolution'
        return data


@dataclass(frozen=True)
class IterationTrace:
    """Iterates of a monotone map started at 0 and at 1"""

    map_id: MapId
    values_from_0: Tuple[float, ...]
    values_from_1: Tuple[float, ...]
    converged: bool
    iterations_used: int
    stalled: bool = False


@dataclass(frozen=True)
class OutcomeDiagnostics:
    x_star: float
    slope: float
    x_star_mis: float
    slope_mis: float
    mu_p1: float
    d_raw: float
    d_mis_raw: float
    residuals: Dict[str, float]
    tangencies: Dict[str, Tuple[float, ...]] = field(default_factory=dict)
    iterations: Dict[str, int] = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values()) if self.residuals else 0.0


@dataclass(frozen=True)
class GameOutcomes:
    """The ten outcome probabilities for one offspring law"""

    n: float
    p: float
    d: float
    n_mis: float
    p_mis: float
    d_mis: float
    s1: float
    s2: float
    e1: float
    e2: float
    diagnostics: Optional[OutcomeDiagnostics] = None

    def values(self) -> Dict[str, float]:
        """Raw probabilities keyed by the CSV column names"""
        return dict(zip(OUTCOME_COLUMNS, (self.n, self.p, self.d, self.n_mis, self.p_mis,
                                          self.d_mis, self.s1, self.s2, self.e1, self.e2)))

    def summary(self, threshold: Optional[float] = None) -> Dict[str, float]:
        """Probabilities with sub-threshold draw and escape values reported as exactly 0"""
        threshold = Config.POSITIVITY_THRESHOLD if threshold is None else threshold
        out = self.values()
        for key in ('D', 'Dm', 'E1', 'E2'):
            if out[key] < threshold:
                out[key] = 0.0
        return out


@dataclass(frozen=True)
class TruncatedOutcomes:
    """Outcome probabilities of the games truncated at a fixed depth"""

    depth: int
    n: float
    p: float
    d: float
    n_mis: float
    p_mis: float
    d_mis: float
    s1: float
    s2: float
    e1: float
    e2: float


class FixedPointAnalyzer:
    """Computes fixed-point sets and outcome probabilities from generating functions"""

    def __init__(
        self,
        tol: Optional[float] = None,
        max_iter: Optional[int] = None,
        grid_resolution: Optional[int] = None,
    ):
        self.logger = GamesLogger.get_logger('analytic')
        self.tol = Config.FP_TOL if tol is None else tol
        self.max_iter = Config.FP_MAX_ITER if max_iter is None else max_iter
        self.grid_resolution = Config.GRID_RESOLUTION if grid_resolution is None else grid_resolution
        if self.tol <= 0:
            raise UsageError("tol must be positive")
        if self.grid_resolution < 2:
            raise UsageError("grid_resolution must be at least 2")
        self.logger.debug(
            f"FixedPointAnalyzer initialized (tol={self.tol}, grid={self.grid_resolution})"
        )

    # ------------------------------------------------------------------ iteration

    def _iterate(self, cmap: ComposedMap, start: float, tol: float,
                 max_iter: int) -> Tuple[List[float], bool, bool]:
        values = [start]
        x = start
        prev_change = None
        slow_steps = 0
        for _ in range(max_iter):
            nxt = float(cmap(x))
            change = abs(nxt - x)
            values.append(nxt)
            x = nxt
            if change < tol:
                return values, True, False
            if prev_change and change > Config.STALL_RATIO * prev_change:
                slow_steps += 1
                if slow_steps >= Config.STALL_WINDOW:
                    return values, False, True
            else:
                slow_steps = 0
            prev_change = change
        return values, False, False

    def iteration_trace(self, dist: OffspringDistribution, map_id: MapId,
                        tol: Optional[float] = None,
                        max_iter: Optional[int] = None) -> IterationTrace:
        """
        Iterate a monotone composed map from 0 and from 1

        Args:
            dist: Offspring distribution
            map_id: One of F2, H2, FH, HF
            tol: Stop when successive iterates differ by less than this
            max_iter: Hard cap on iterations per starting point

        Returns:
            IterationTrace with both sequences
        """
        tol = self.tol if tol is None else tol
        max_iter = self.max_iter if max_iter is None else max_iter
        cmap = ComposedMap(dist, MapId(map_id))
        up, up_ok, up_stall = self._iterate(cmap, 0.0, tol, max_iter)
        down, down_ok, down_stall = self._iterate(cmap, 1.0, tol, max_iter)
        return IterationTrace(
            map_id=MapId(map_id),
            values_from_0=tuple(up),
            values_from_1=tuple(down),
            converged=up_ok and down_ok,
            iterations_used=len(up) + len(down) - 2,
            stalled=up_stall or down_stall,
        )

    # ------------------------------------------------------------------ isolation

    def isolate_fixed_points(self, dist: OffspringDistribution, map_id: MapId,
                             grid_resolution: Optional[int] = None) -> FixedPointSet:
        """
        Locate all fixed points of a composed map on [0, 1]

        Args:
            dist: Offspring distribution
            map_id: Map to analyse
            grid_resolution: Number of grid cells for sign-change scanning

        Returns:
            FixedPointSet with min/max/all fixed points and slope diagnostics
        """
        map_id = MapId(map_id)
        resolution = self.grid_resolution if grid_resolution is None else grid_resolution
        misere = map_id in (MapId.H2, MapId.H)
        x_star = decreasing_fixed_point(dist.h if misere else dist.f)
        slope = -float(dist.g_prime(x_star))

        if map_id in (MapId.F, MapId.H):
            return FixedPointSet(map_id, x_star, x_star, (x_star,), x_star, slope)

        if dist.is_identity_law:
            return FixedPointSet(map_id, 0.0, 1.0, (0.0, 1.0), x_star, slope, identity=True)

        cmap = ComposedMap(dist, map_id)
        grid = np.linspace(0.0, 1.0, resolution + 1)
        trivial = {MapId.F2: x_star, MapId.H2: x_star, MapId.FH: 0.0, MapId.HF: 1.0}[map_id]
        if map_id in (MapId.F2, MapId.H2):
            grid = np.union1d(grid, [x_star])

        q = np.asarray(_deflated_residual(dist, map_id, grid), dtype=float)
        if np.any(np.isnan(q)):
            raise FixedPointError(f"residual of {map_id.value} is not finite for {dist}")

        def scalar_residual(x: float) -> float:
            return float(_deflated_residual(dist, map_id, x))

        roots = [trivial]
        roots.extend(grid[q == 0.0].tolist())
        for i in np.nonzero(q[:-1] * q[1:] < 0.0)[0]:
            roots.append(float(brentq(scalar_residual, grid[i], grid[i + 1], xtol=BRACKET_XTOL)))
        for endpoint in (0.0, 1.0):
            if abs(float(cmap(endpoint)) - endpoint) <= ENDPOINT_TOL:
                roots.append(endpoint)

        # a root pair inside one cell, or a double root, leaves no sign change on the grid
        mag = np.abs(q)
        inner = np.arange(1, len(q) - 1)
        dips = inner[(mag[inner] < mag[inner - 1]) & (mag[inner] < mag[inner + 1])
                     & (mag[inner] > 0.0) & (mag[inner] < DIP_SCAN_TOL)
                     & (np.sign(q[inner - 1]) == np.sign(q[inner]))
                     & (np.sign(q[inner + 1]) == np.sign(q[inner]))]
        near_misses = []
        for i in dips:
            found, miss = _refine_dip(scalar_residual, float(grid[i - 1]), float(grid[i + 1]),
                                      float(np.sign(q[i])))
            if len(found) == 1 and map_id in (MapId.F2, MapId.H2) \
                    and abs(found[0] - x_star) < PITCHFORK_SNAP:
                continue
            roots.extend(found)
            if miss is not None:
                near_misses.append(miss)
        tangencies = tuple(near_misses)

        # fixed points of F∘F (H∘H) come in pairs x, F(x) (x, H(x))
        if map_id in (MapId.F2, MapId.H2):
            single = dist.h if misere else dist.f
            images = np.clip(np.asarray(single(np.asarray(roots, dtype=float)), dtype=float), 0.0, 1.0)
            roots.extend(images.tolist())

        all_fps = _dedupe(roots)
        fps = FixedPointSet(
            map_id=map_id,
            min_fp=all_fps[0],
            max_fp=all_fps[-1],
            all_fps=all_fps,
            x_star=x_star,
            slope_at_x_star=slope,
            unresolved_tangencies=tangencies,
        )
        GamesLogger.log_computation('fixed_points', str(dist), {
            'map': map_id.value, 'count': len(all_fps), 'min': fps.min_fp, 'max': fps.max_fp
        })
        return fps

    def fixed_point_extremes(self, dist: OffspringDistribution, map_id: MapId,
                             tol: Optional[float] = None,
                             max_iter: Optional[int] = None) -> Tuple[float, float, FixedPointSet, IterationTrace]:
        """Least and greatest fixed points from one isolation pass and iteration from both ends"""
        map_id = MapId(map_id)
        fps = self.isolate_fixed_points(dist, map_id)
        if map_id in (MapId.F, MapId.H):
            # decreasing maps oscillate under iteration; the bracketed root is the answer
            return fps.min_fp, fps.max_fp, fps, IterationTrace(map_id, (), (), True, 0)
        trace = self.iteration_trace(dist, map_id, tol, max_iter)
        if fps.identity:
            return fps.min_fp, fps.max_fp, fps, trace

        cmap = ComposedMap(dist, map_id)
        tol = self.tol if tol is None else tol
        lower = trace.values_from_0[-1]
        upper = trace.values_from_1[-1]
        if not (np.isfinite(lower) and np.isfinite(upper)):
            raise FixedPointError(f"iteration of {map_id.value} diverged for {dist}", trace)

        min_fp, max_fp = fps.min_fp, fps.max_fp
        # Iterates from 0 (from 1) never pass the least (greatest) fixed point; a converged
        # iterate outside the isolated range is a tangential root the grid could not see.
        if lower < min_fp - DEDUP_TOL and abs(float(cmap(lower)) - lower) <= 10 * tol:
            min_fp = lower
        if upper > max_fp + DEDUP_TOL and abs(float(cmap(upper)) - upper) <= 10 * tol:
            max_fp = upper
        if min_fp > max_fp:
            raise FixedPointError(f"inconsistent fixed points for {map_id.value} of {dist}", trace)
        return min_fp, max_fp, fps, trace

    def min_fixed_point(self, cmap: ComposedMap, tol: Optional[float] = None,
                        max_iter: Optional[int] = None) -> float:
        """Least fixed point: limit of the iterates from 0"""
        return self.fixed_point_extremes(cmap.dist, cmap.map_id, tol, max_iter)[0]

    def max_fixed_point(self, cmap: ComposedMap, tol: Optional[float] = None,
                        max_iter: Optional[int] = None) -> float:
        """Greatest fixed point: limit of the iterates from 1"""
        return self.fixed_point_extremes(cmap.dist, cmap.map_id, tol, max_iter)[1]

    # ------------------------------------------------------------------ outcomes

    def outcomes(self, dist: OffspringDistribution, tol: Optional[float] = None) -> GameOutcomes:
        """
        Compute the ten outcome probabilities

        Args:
            dist: Offspring distribution
            tol: Iteration tolerance (defaults to Config.FP_TOL)

        Returns:
            GameOutcomes with identities and residual diagnostics attached
        """
        n, n_hi, fps_f2, trace_f2 = self.fixed_point_extremes(dist, MapId.F2, tol)
        n_mis, n_mis_hi, fps_h2, trace_h2 = self.fixed_point_extremes(dist, MapId.H2, tol)
        _, e1, fps_fh, trace_fh = self.fixed_point_extremes(dist, MapId.FH, tol)
        s1, _, fps_hf, trace_hf = self.fixed_point_extremes(dist, MapId.HF, tol)

        # F reverses the order of the fixed points of F∘F, and H carries those of F∘H onto
        # those of H∘F, so each extreme fixes its partner
        n_hi = max(n_hi, float(dist.f(n)))
        n = float(dist.f(n_hi))
        n_mis_hi = max(n_mis_hi, float(dist.h(n_mis)))
        n_mis = float(dist.h(n_mis_hi))
        e1 = max(e1, float(dist.f(s1)))
        s1 = float(dist.h(e1))

        p = 1.0 - n_hi
        p_mis = 1.0 - n_mis_hi
        d = 1.0 - n - p
        d_mis = 1.0 - n_mis - p_mis
        s2 = 1.0 - e1
        e2 = 1.0 - s1

        residuals = {
            'one_minus_p_vs_F_n': abs(1.0 - p - dist.f(n)),
            'n_vs_F_one_minus_p': abs(n - dist.f(1.0 - p)),
            'one_minus_pm_vs_H_nm': abs(1.0 - p_mis - dist.h(n_mis)),
            'nm_vs_H_one_minus_pm': abs(n_mis - dist.h(1.0 - p_mis)),
            's1_vs_H_e1': abs(s1 - dist.h(e1)),
            'e1_vs_F_s1': abs(e1 - dist.f(s1)),
        }
        diagnostics = OutcomeDiagnostics(
            x_star=fps_f2.x_star,
            slope=fps_f2.slope_at_x_star,
            x_star_mis=fps_h2.x_star,
            slope_mis=fps_h2.slope_at_x_star,
            mu_p1=dist.mean() * dist.p1,
            d_raw=n_hi - n,
            d_mis_raw=n_mis_hi - n_mis,
            residuals={k: float(v) for k, v in residuals.items()},
            tangencies={
                fps.map_id.value: fps.unresolved_tangencies
                for fps in (fps_f2, fps_h2, fps_fh, fps_hf) if fps.unresolved_tangencies
            },
            iterations={
                trace.map_id.value: trace.iterations_used
                for trace in (trace_f2, trace_h2, trace_fh, trace_hf)
            },
        )
        result = GameOutcomes(n, p, d, n_mis, p_mis, d_mis, s1, s2, e1, e2, diagnostics)
        if diagnostics.max_residual > IDENTITY_TOL:
            raise FixedPointError(
                f"fixed-point identities off by {diagnostics.max_residual:.3g} for {dist}",
                diagnostics,
            )
        GamesLogger.log_computation('outcomes', str(dist), result.values())
        return result

    def truncated_outcomes(self, dist: OffspringDistribution, depth: int) -> TruncatedOutcomes:
        """
        Outcome probabilities when vertices at the given depth end the game

        Depth-n vertices are draws in the normal and misère games and Escaper wins in
        the escape game; the root's status is then given by n rounds of the set recursions.
        """
        if depth < 0:
            raise UsageError("depth must be nonnegative")
        p0 = dist.p0
        n = p = n_mis = p_mis = s1 = s2 = 0.0
        for _ in range(depth):
            n, p = 1.0 - dist.g(1.0 - p), dist.g(n)
            n_mis, p_mis = 1.0 - dist.g(1.0 - p_mis) + p0, dist.g(n_mis) - p0
            s1, s2 = 1.0 - dist.g(1.0 - s2) + p0, dist.g(s1)
        return TruncatedOutcomes(
            depth=depth,
            n=n, p=p, d=1.0 - n - p,
            n_mis=n_mis, p_mis=p_mis, d_mis=1.0 - n_mis - p_mis,
            s1=s1, s2=s2, e1=1.0 - s2, e2=1.0 - s1,
        )

    def curve_samples(self, dist: OffspringDistribution, map_id: MapId,
                      resolution: int) -> pd.DataFrame:
        """Samples of map(x) - x on a uniform grid, for plotting"""
        if resolution < 2:
            raise UsageError("resolution must be at least 2")
        x = np.linspace(0.0, 1.0, resolution + 1)
        values = np.asarray(ComposedMap(dist, MapId(map_id))(x), dtype=float) - x
        return pd.DataFrame({'x': x, 'value': values})

    def pairing_defect(self, dist: OffspringDistribution, fps: FixedPointSet) -> float:
        """Largest distance from F(x) to the nearest fixed point, over fixed points x of F∘F"""
        if fps.identity or len(fps.all_fps) < 2:
            return 0.0
        points = np.asarray(fps.all_fps)
        images = np.asarray(dist.f(points) if fps.map_id == MapId.F2 else dist.h(points))
        return float(np.max(np.min(np.abs(images[:, None] - points[None, :]), axis=1)))
