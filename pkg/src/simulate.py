"""
Monte Carlo Oracle
Samples depth-truncated Galton-Watson trees and solves the normal, misère and escape games on them
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.analytic import GameId
from src.config import Config
from src.exceptions import TreeTooLargeError, UsageError
from src.offspring import OffspringDistribution
from src.utils.logger import GamesLogger
from src.utils.seeding import sample_rng

_NO_INDEX = np.iinfo(np.int64).max


class NodeStatus(IntEnum):
    UNDECIDED = 0
    NEXT_WIN = 1
    PREV_WIN = 2
    STOPPER_WIN = 3
    ESCAPER_WIN = 4


@dataclass(frozen=True)
class SampledTree:
    """
    Breadth-first arena of a depth-truncated tree.

    Node 0 is the root; the children of node i are the contiguous block
    child_start[i] .. child_start[i] + child_count[i]. Nodes at depth == depth_cutoff
    never had offspring sampled.
    """

    parent: np.ndarray
    depth: np.ndarray
    child_start: np.ndarray
    child_count: np.ndarray
    depth_cutoff: int

    @property
    def size(self) -> int:
        return int(self.parent.size)

    @property
    def truncated(self) -> np.ndarray:
        return self.depth == self.depth_cutoff

    @property
    def is_leaf(self) -> np.ndarray:
        """Nodes with no children that are not truncation boundary"""
        return (self.child_count == 0) & ~self.truncated

    def level_sizes(self) -> np.ndarray:
        return np.bincount(self.depth)

    def level_offsets(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.level_sizes())))

    def children(self, node: int) -> np.ndarray:
        start = int(self.child_start[node])
        return np.arange(start, start + int(self.child_count[node]))

    @classmethod
    def from_counts(cls, level_counts: Sequence[np.ndarray], last_level: int,
                    depth_cutoff: int) -> 'SampledTree':
        """Assemble the arena from per-level offspring counts"""
        counts = np.concatenate(list(level_counts) + [np.zeros(last_level, dtype=np.int64)])
        counts = counts.astype(np.int64)
        sizes = [1] + [int(c.sum()) for c in level_counts]
        total = int(counts.size)
        child_start = 1 + np.concatenate(([0], np.cumsum(counts)[:-1]))
        parent = np.concatenate(([-1], np.repeat(np.arange(total), counts)))
        depth = np.repeat(np.arange(len(sizes)), sizes)
        return cls(parent=parent, depth=depth, child_start=child_start.astype(np.int64),
                   child_count=counts, depth_cutoff=depth_cutoff)

    @classmethod
    def from_nested(cls, structure: Tuple, depth_cutoff: int = 64) -> 'SampledTree':
        """
        Build a tree from nested tuples, () being a leaf

        Args:
            structure: Root given as the tuple of its children
            depth_cutoff: Depth at which children are dropped

        Returns:
            SampledTree in breadth-first order
        """
        level = [structure]
        level_counts: List[np.ndarray] = []
        for _ in range(depth_cutoff):
            counts = np.array([len(node) for node in level], dtype=np.int64)
            if counts.sum() == 0:
                return cls.from_counts(level_counts, len(level), depth_cutoff)
            level_counts.append(counts)
            level = [child for node in level for child in node]
        return cls.from_counts(level_counts, len(level), depth_cutoff)


@dataclass(frozen=True)
class GameSolution:
    """Per-node statuses and least indices for one game on one tree"""

    game: GameId
    status: np.ndarray
    index: np.ndarray
    stopper_moves_first: Optional[bool] = None

    @property
    def root_status(self) -> NodeStatus:
        return NodeStatus(int(self.status[0]))

    @property
    def root_index(self) -> int:
        return int(self.index[0])

    @property
    def decided(self) -> bool:
        return self.root_status != NodeStatus.UNDECIDED

    @property
    def moves(self) -> Optional[int]:
        """Game length T: least index at the root minus one, None when not decided by a win"""
        if self.root_index == 0:
            return None
        return self.root_index - 1


@dataclass(frozen=True)
class ReducedTree:
    nodes: np.ndarray
    height: Optional[int]
    censored: bool


@dataclass
class McEstimate:
    """Aggregated Monte Carlo estimate for one game"""

    game: GameId
    depth_cutoff: int
    n_samples: int
    seed: int
    samples_used: int
    skipped: int
    estimates: Dict[str, float]
    stderr: Dict[str, float]
    censored: int = 0
    mean_T: Optional[float] = None
    T_histogram: Dict[int, int] = field(default_factory=dict)
    mean_Tstar: Optional[float] = None
    stderr_Tstar: Optional[float] = None
    Tstar_histogram: Dict[int, int] = field(default_factory=dict)
    Tstar_censored: int = 0

    @property
    def censored_fraction(self) -> float:
        return self.censored / self.samples_used if self.samples_used else 0.0

    @property
    def Tstar_censored_fraction(self) -> float:
        return self.Tstar_censored / self.samples_used if self.samples_used else 0.0


# ---------------------------------------------------------------------- sampling

def sample_tree(dist: OffspringDistribution, depth_cutoff: int, seed: Optional[int] = None,
                rng: Optional[np.random.Generator] = None,
                node_budget: Optional[int] = None) -> SampledTree:
    """
    Sample a Galton-Watson tree level by level up to depth_cutoff

    Offspring counts of a level are drawn in one call, so trees sampled from equal
    seeds share every level below the smaller cutoff.

    Args:
        dist: Offspring distribution
        depth_cutoff: Depth of the truncation boundary
        seed: Seed for a fresh generator (ignored when rng is given)
        rng: Generator to draw from
        node_budget: Maximum number of nodes (defaults to Config.NODE_BUDGET)

    Returns:
        SampledTree

    Raises:
        TreeTooLargeError: the tree outgrew node_budget
    """
    if depth_cutoff < 0:
        raise UsageError("depth_cutoff must be nonnegative")
    budget = Config.NODE_BUDGET if node_budget is None else node_budget
    rng = rng if rng is not None else np.random.default_rng(seed)

    level_counts: List[np.ndarray] = []
    width = 1
    total = 1
    for d in range(depth_cutoff):
        counts = dist.sample(rng, width)
        width = int(counts.sum())
        total += width
        if total > budget:
            raise TreeTooLargeError(budget, d + 1)
        level_counts.append(counts)
        if width == 0:
            break
    return SampledTree.from_counts(level_counts, width, depth_cutoff)


# ---------------------------------------------------------------------- solving

def _levels_bottom_up(tree: SampledTree):
    """Yield (internal nodes, their children, reduceat offsets) from the deepest level up"""
    offsets = tree.level_offsets()
    for lvl in range(len(offsets) - 2, -1, -1):
        nodes = np.arange(offsets[lvl], offsets[lvl + 1])
        internal = nodes[tree.child_count[nodes] > 0]
        if internal.size == 0:
            continue
        first = tree.child_start[internal[0]]
        last = tree.child_start[internal[-1]] + tree.child_count[internal[-1]]
        yield internal, np.arange(first, last), tree.child_start[internal] - first


def _solve_alternating(tree: SampledTree, leaf_status: NodeStatus, game: GameId) -> GameSolution:
    status = np.zeros(tree.size, dtype=np.int8)
    index = np.zeros(tree.size, dtype=np.int64)
    leaves = tree.is_leaf
    status[leaves] = leaf_status
    index[leaves] = 1

    for internal, ch, offs in _levels_bottom_up(tree):
        cs = status[ch]
        ci = index[ch]
        is_prev = cs == NodeStatus.PREV_WIN
        is_next = cs == NodeStatus.NEXT_WIN
        any_prev = np.maximum.reduceat(is_prev.astype(np.int8), offs).astype(bool)
        all_next = np.minimum.reduceat(is_next.astype(np.int8), offs).astype(bool)
        min_prev = np.minimum.reduceat(np.where(is_prev, ci, _NO_INDEX), offs)
        max_next = np.maximum.reduceat(np.where(is_next, ci, 0), offs)
        status[internal] = np.where(any_prev, NodeStatus.NEXT_WIN,
                                    np.where(all_next, NodeStatus.PREV_WIN, NodeStatus.UNDECIDED))
        index[internal] = np.where(any_prev, min_prev, np.where(all_next, max_next, -1)) + 1
    return GameSolution(game=game, status=status, index=index)


def solve_normal(tree: SampledTree) -> GameSolution:
    """Normal play: a leaf is a win for the previous player"""
    return _solve_alternating(tree, NodeStatus.PREV_WIN, GameId.NORMAL)


def solve_misere(tree: SampledTree) -> GameSolution:
    """Misère play: a leaf is a win for the player to move"""
    return _solve_alternating(tree, NodeStatus.NEXT_WIN, GameId.MISERE)


def escape_indices(tree: SampledTree) -> Tuple[np.ndarray, np.ndarray]:
    """
    Least Stopper-win indices with Stopper to move (s1) and Escaper to move (s2).

    Zero means Escaper wins; truncated nodes are Escaper wins.
    """
    s1 = np.zeros(tree.size, dtype=np.int64)
    s2 = np.zeros(tree.size, dtype=np.int64)
    leaves = tree.is_leaf
    s1[leaves] = 1
    s2[leaves] = 1

    for internal, ch, offs in _levels_bottom_up(tree):
        c1 = s1[ch]
        c2 = s2[ch]
        best = np.minimum.reduceat(np.where(c2 > 0, c2, _NO_INDEX), offs)
        s1[internal] = np.where(best < _NO_INDEX, best, -1) + 1
        all_stopped = np.minimum.reduceat((c1 > 0).astype(np.int8), offs).astype(bool)
        s2[internal] = np.where(all_stopped, np.maximum.reduceat(c1, offs) + 1, 0)
    return s1, s2


def solve_escape(tree: SampledTree, stopper_moves_first: bool) -> GameSolution:
    """
    Escape game; node statuses are given for whoever moves at that node's depth

    Args:
        tree: Sampled tree
        stopper_moves_first: Role of the player moving at the root

    Returns:
        GameSolution with STOPPER_WIN / ESCAPER_WIN statuses
    """
    s1, s2 = escape_indices(tree)
    stopper_moves = (tree.depth % 2 == 0) == bool(stopper_moves_first)
    index = np.where(stopper_moves, s1, s2)
    status = np.where(index > 0, NodeStatus.STOPPER_WIN, NodeStatus.ESCAPER_WIN).astype(np.int8)
    return GameSolution(game=GameId.ESCAPE, status=status, index=index,
                        stopper_moves_first=bool(stopper_moves_first))


def solve(tree: SampledTree, game: GameId) -> GameSolution:
    game = GameId(game)
    if game == GameId.NORMAL:
        return solve_normal(tree)
    if game == GameId.MISERE:
        return solve_misere(tree)
    return solve_escape(tree, stopper_moves_first=True)


def reduced_tree(tree: SampledTree, solution: GameSolution) -> ReducedTree:
    """
    Remove the bad nodes and return the component containing the root.

    Bad nodes are next-player wins whose parent is a next-player win, and
    previous-player wins whose parent has another previous-player-win child.
    The result is censored when an undecided node could change which nodes are bad.
    """
    if solution.game == GameId.ESCAPE:
        raise UsageError("reduced trees are defined for the normal and misère games only")
    status = solution.status
    if status[0] == NodeStatus.UNDECIDED:
        return ReducedTree(nodes=np.array([], dtype=np.int64), height=None, censored=True)

    frontier = np.array([0], dtype=np.int64)
    kept = [frontier]
    height = 0
    while True:
        counts = tree.child_count[frontier]
        total = int(counts.sum())
        if total == 0:
            break
        owner = np.repeat(np.arange(frontier.size), counts)
        first = np.repeat(tree.child_start[frontier], counts)
        block_start = np.repeat(np.cumsum(counts) - counts, counts)
        ch = first + (np.arange(total) - block_start)

        parent_status = status[frontier]
        owner_status = parent_status[owner]
        ch_status = status[ch]
        n_prev = np.bincount(owner, weights=(ch_status == NodeStatus.PREV_WIN).astype(float),
                             minlength=frontier.size)
        n_open = np.bincount(owner, weights=(ch_status == NodeStatus.UNDECIDED).astype(float),
                             minlength=frontier.size)
        winner_moves = parent_status == NodeStatus.NEXT_WIN
        if np.any(winner_moves & (n_prev == 1) & (n_open > 0)):
            return ReducedTree(nodes=np.concatenate(kept), height=None, censored=True)

        keep = (owner_status == NodeStatus.PREV_WIN) | (
            (owner_status == NodeStatus.NEXT_WIN) & (ch_status == NodeStatus.PREV_WIN)
            & (n_prev[owner] == 1)
        )
        frontier = ch[keep]
        if frontier.size == 0:
            break
        if np.any(status[frontier] == NodeStatus.UNDECIDED):
            return ReducedTree(nodes=np.concatenate(kept), height=None, censored=True)
        kept.append(frontier)
        height += 1
    return ReducedTree(nodes=np.concatenate(kept), height=height, censored=False)


# ---------------------------------------------------------------------- Monte Carlo

def _simulate_chunk(dist: OffspringDistribution, game: GameId, depth_cutoff: int, seed: int,
                    start: int, stop: int, node_budget: int, with_tstar: bool) -> List[Tuple]:
    """Solve samples start..stop-1; one record per sample, None for a skipped sample"""
    records: List[Tuple] = []
    for i in range(start, stop):
        try:
            tree = sample_tree(dist, depth_cutoff, rng=sample_rng(seed, i), node_budget=node_budget)
        except TreeTooLargeError as e:
            GamesLogger.log_error('simulate.sample_tree', e, {'sample': i, 'seed': seed})
            records.append(None)
            continue
        if game == GameId.ESCAPE:
            s1, s2 = escape_indices(tree)
            records.append((int(s1[0]) > 0, int(s2[0]) > 0))
            continue
        sol = solve(tree, game)
        tstar: Optional[int] = None
        tstar_censored = False
        if with_tstar:
            if sol.decided:
                reduced = reduced_tree(tree, sol)
                tstar, tstar_censored = reduced.height, reduced.censored
            else:
                tstar_censored = True
        records.append((int(sol.root_status), sol.moves, tstar, tstar_censored))
    return records


def _chunk_bounds(n_samples: int, pieces: int) -> List[Tuple[int, int]]:
    step = max(1, math.ceil(n_samples / pieces))
    return [(s, min(s + step, n_samples)) for s in range(0, n_samples, step)]


def _proportion(hits: int, n: int) -> Tuple[float, float]:
    if n == 0:
        return float('nan'), float('nan')
    p = hits / n
    return p, math.sqrt(p * (1.0 - p) / n)


def _histogram(values: List[int]) -> Dict[int, int]:
    if not values:
        return {}
    keys, counts = np.unique(np.asarray(values), return_counts=True)
    return {int(k): int(c) for k, c in zip(keys, counts)}


class MonteCarloSimulator:
    """Monte Carlo estimates of outcome probabilities and game lengths"""

    def __init__(self, threads: Optional[int] = None, node_budget: Optional[int] = None):
        self.logger = GamesLogger.get_logger('simulate')
        self.threads = Config.THREADS if threads is None else threads
        self.node_budget = Config.NODE_BUDGET if node_budget is None else node_budget
        if self.threads < 1:
            raise UsageError("threads must be at least 1")
        self.logger.debug(f"MonteCarloSimulator initialized (threads={self.threads})")

    def _run_chunks(self, dist: OffspringDistribution, game: GameId, depth_cutoff: int,
                    n_samples: int, seed: int, with_tstar: bool) -> List[Tuple]:
        if self.threads == 1:
            return _simulate_chunk(dist, game, depth_cutoff, seed, 0, n_samples,
                                   self.node_budget, with_tstar)
        bounds = _chunk_bounds(n_samples, 4 * self.threads)
        records: List[Tuple] = []
        with ProcessPoolExecutor(max_workers=self.threads) as executor:
            futures = [
                executor.submit(_simulate_chunk, dist, game, depth_cutoff, seed, lo, hi,
                                self.node_budget, with_tstar)
                for lo, hi in bounds
            ]
            for future in futures:
                records.extend(future.result())
        return records

    def monte_carlo(self, dist: OffspringDistribution, game: GameId, depth_cutoff: int,
                    n_samples: int, seed: Optional[int] = None,
                    with_tstar: bool = True) -> McEstimate:
        """
        Estimate outcome probabilities from i.i.d. truncated trees

        Args:
            dist: Offspring distribution
            game: normal, misere or escape
            depth_cutoff: Truncation depth
            n_samples: Number of trees
            seed: Master seed (defaults to Config.DEFAULT_SEED)
            with_tstar: Also build reduced trees for T*

        Returns:
            McEstimate; identical for any thread count
        """
        game = GameId(game)
        if n_samples < 1:
            raise UsageError("n_samples must be at least 1")
        seed = Config.DEFAULT_SEED if seed is None else int(seed)
        records = self._run_chunks(dist, game, depth_cutoff, n_samples, seed,
                                   with_tstar and game != GameId.ESCAPE)
        used = [r for r in records if r is not None]
        skipped = len(records) - len(used)
        n = len(used)

        if game == GameId.ESCAPE:
            s1, se1 = _proportion(sum(1 for r in used if r[0]), n)
            s2, se2 = _proportion(sum(1 for r in used if r[1]), n)
            result = McEstimate(
                game=game, depth_cutoff=depth_cutoff, n_samples=n_samples, seed=seed,
                samples_used=n, skipped=skipped,
                estimates={'S1': s1, 'S2': s2, 'E1': 1.0 - s2, 'E2': 1.0 - s1},
                stderr={'S1': se1, 'S2': se2, 'E1': se2, 'E2': se1},
            )
        else:
            suffix = '' if game == GameId.NORMAL else 'm'
            nxt, se_n = _proportion(sum(1 for r in used if r[0] == NodeStatus.NEXT_WIN), n)
            prv, se_p = _proportion(sum(1 for r in used if r[0] == NodeStatus.PREV_WIN), n)
            censored = sum(1 for r in used if r[0] == NodeStatus.UNDECIDED)
            drw, se_d = _proportion(censored, n)
            lengths = [r[1] for r in used if r[1] is not None]
            tstars = [r[2] for r in used if r[2] is not None]
            result = McEstimate(
                game=game, depth_cutoff=depth_cutoff, n_samples=n_samples, seed=seed,
                samples_used=n, skipped=skipped,
                estimates={'N' + suffix: nxt, 'P' + suffix: prv, 'D' + suffix: drw},
                stderr={'N' + suffix: se_n, 'P' + suffix: se_p, 'D' + suffix: se_d},
                censored=censored,
                mean_T=float(np.mean(lengths)) if lengths else None,
                T_histogram=_histogram(lengths),
                mean_Tstar=float(np.mean(tstars)) if tstars else None,
                stderr_Tstar=float(np.std(tstars, ddof=1) / math.sqrt(len(tstars)))
                if len(tstars) > 1 else None,
                Tstar_histogram=_histogram(tstars),
                Tstar_censored=sum(1 for r in used if r[3]),
            )

        if skipped:
            self.logger.warning(f"{skipped} of {n_samples} samples exceeded the node budget")
        GamesLogger.log_simulation(str(dist), {
            'game': game.value, 'depth': depth_cutoff, 'samples': n_samples,
            'skipped': skipped, 'estimates': result.estimates,
        })
        return result
