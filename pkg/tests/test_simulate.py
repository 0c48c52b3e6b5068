"""
Tests for tree sampling, the vectorized game solvers and the Monte Carlo oracle
"""

import math

import numpy as np
import pytest

from src.analytic import GameId
from src.exceptions import TreeTooLargeError, UsageError
from src.offspring import finite, poisson, random_distribution
from src.simulate import (
    MonteCarloSimulator,
    NodeStatus,
    SampledTree,
    escape_indices,
    reduced_tree,
    sample_tree,
    solve,
    solve_escape,
)
from tests.conftest import binary


# ---------------------------------------------------------------------- recursive oracles

def recursive_status(node, game, depth=0, cutoff=None):
    """(status, least index) by direct backward induction"""
    if cutoff is not None and depth == cutoff:
        return NodeStatus.UNDECIDED, 0
    if not node:
        leaf = NodeStatus.PREV_WIN if game == GameId.NORMAL else NodeStatus.NEXT_WIN
        return leaf, 1
    results = [recursive_status(child, game, depth + 1, cutoff) for child in node]
    prev = [i for s, i in results if s == NodeStatus.PREV_WIN]
    if prev:
        return NodeStatus.NEXT_WIN, min(prev) + 1
    if all(s == NodeStatus.NEXT_WIN for s, _ in results):
        return NodeStatus.PREV_WIN, max(i for _, i in results) + 1
    return NodeStatus.UNDECIDED, 0


def recursive_escape(node, depth=0, cutoff=None):
    """(Stopper-to-move index, Escaper-to-move index); 0 is an Escaper win"""
    if cutoff is not None and depth == cutoff:
        return 0, 0
    if not node:
        return 1, 1
    results = [recursive_escape(child, depth + 1, cutoff) for child in node]
    stopper_options = [s2 for _, s2 in results if s2 > 0]
    s1 = min(stopper_options) + 1 if stopper_options else 0
    s2 = max(s1c for s1c, _ in results) + 1 if all(s1c > 0 for s1c, _ in results) else 0
    return s1, s2


def forcing_height(node, game):
    """Longest path the losing side can force: height of the tree with bad nodes removed"""
    status, _ = recursive_status(node, game)
    if status == NodeStatus.PREV_WIN:
        return 1 + max(forcing_height(child, game) for child in node) if node else 0
    prev_children = [c for c in node if recursive_status(c, game)[0] == NodeStatus.PREV_WIN]
    if len(prev_children) == 1:
        return 1 + forcing_height(prev_children[0], game)
    return 0


# ---------------------------------------------------------------------- tests

class TestSampledTree:
    def test_from_nested_layout(self):
        tree = SampledTree.from_nested(((), ((), ())))
        assert tree.size == 5
        assert tree.parent.tolist() == [-1, 0, 0, 2, 2]
        assert tree.depth.tolist() == [0, 1, 1, 2, 2]
        assert tree.children(0).tolist() == [1, 2]
        assert tree.children(2).tolist() == [3, 4]
        assert tree.level_sizes().tolist() == [1, 2, 2]
        assert tree.is_leaf.tolist() == [False, True, False, True, True]

    def test_single_leaf(self):
        tree = SampledTree.from_nested(())
        assert tree.size == 1
        assert tree.is_leaf.tolist() == [True]

    def test_truncation_marks_boundary(self):
        tree = SampledTree.from_nested(((((),),),), depth_cutoff=2)
        assert tree.size == 3
        assert tree.truncated.tolist() == [False, False, True]
        assert not tree.is_leaf.any()

    def test_sampling_is_reproducible(self):
        dist = poisson(1.2)
        first = sample_tree(dist, 12, seed=42)
        second = sample_tree(dist, 12, seed=42)
        np.testing.assert_array_equal(first.parent, second.parent)
        np.testing.assert_array_equal(first.child_count, second.child_count)

    def test_deeper_cutoff_extends_shallower_tree(self):
        dist = finite([0.3, 0.3, 0.4])
        shallow = sample_tree(dist, 5, seed=9)
        deep = sample_tree(dist, 8, seed=9)
        keep = deep.depth <= 5
        np.testing.assert_array_equal(deep.parent[keep], shallow.parent)

    def test_children_blocks_are_contiguous(self):
        tree = sample_tree(finite([0.2, 0.3, 0.5]), 10, seed=3)
        for node in range(tree.size):
            for child in tree.children(node):
                assert tree.parent[child] == node

    def test_node_budget(self):
        with pytest.raises(TreeTooLargeError) as info:
            sample_tree(finite([0.0, 0.0, 1.0]), 20, seed=0, node_budget=1000)
        assert info.value.budget == 1000
        assert info.value.depth_reached == 9

    def test_negative_cutoff(self):
        with pytest.raises(UsageError):
            sample_tree(poisson(1.0), -1, seed=0)


class TestSolversAgainstEnumeration:
    @pytest.mark.parametrize("game", [GameId.NORMAL, GameId.MISERE])
    def test_statuses_indices_and_forcing_height(self, small_trees, game):
        assert len(small_trees) == 2278
        for structure in small_trees:
            tree = SampledTree.from_nested(structure)
            solution = solve(tree, game)
            status, index = recursive_status(structure, game)
            assert solution.root_status == status
            assert solution.root_index == index
            assert solution.moves == index - 1
            reduced = reduced_tree(tree, solution)
            assert not reduced.censored
            assert reduced.height == forcing_height(structure, game)

    @pytest.mark.parametrize("cutoff", [1, 2, 3])
    @pytest.mark.parametrize("game", [GameId.NORMAL, GameId.MISERE])
    def test_truncated_statuses(self, small_trees, game, cutoff):
        for structure in small_trees:
            tree = SampledTree.from_nested(structure, depth_cutoff=cutoff)
            solution = solve(tree, game)
            assert (solution.root_status, solution.root_index) == \
                recursive_status(structure, game, cutoff=cutoff)

    @pytest.mark.parametrize("cutoff", [None, 1, 2, 3])
    def test_escape_indices(self, small_trees, cutoff):
        for structure in small_trees:
            tree = SampledTree.from_nested(structure, depth_cutoff=cutoff or 64)
            s1, s2 = escape_indices(tree)
            assert (int(s1[0]), int(s2[0])) == recursive_escape(structure, cutoff=cutoff)

    def test_finite_trees_always_stop(self, small_trees):
        for structure in small_trees[:200]:
            tree = SampledTree.from_nested(structure)
            assert solve_escape(tree, True).root_status == NodeStatus.STOPPER_WIN
            assert solve_escape(tree, False).root_status == NodeStatus.STOPPER_WIN


class TestGameSolution:
    def test_leaf_root(self):
        tree = SampledTree.from_nested(())
        normal = solve(tree, GameId.NORMAL)
        assert normal.root_status == NodeStatus.PREV_WIN
        assert normal.moves == 0
        misere = solve(tree, GameId.MISERE)
        assert misere.root_status == NodeStatus.NEXT_WIN

    def test_undecided_root_has_no_length(self):
        tree = SampledTree.from_nested(((),), depth_cutoff=1)
        solution = solve(tree, GameId.NORMAL)
        assert not solution.decided
        assert solution.moves is None
        assert reduced_tree(tree, solution).censored

    def test_escape_roles_alternate_with_depth(self):
        tree = SampledTree.from_nested((((),),))
        stopper_first = solve_escape(tree, True)
        escaper_first = solve_escape(tree, False)
        s1, s2 = escape_indices(tree)
        assert stopper_first.index.tolist() == [s1[0], s2[1], s1[2]]
        assert escaper_first.index.tolist() == [s2[0], s1[1], s2[2]]

    def test_reduced_tree_rejects_escape(self):
        tree = SampledTree.from_nested(((),))
        with pytest.raises(UsageError):
            reduced_tree(tree, solve(tree, GameId.ESCAPE))

    def test_censoring_when_undecided_sibling_could_matter(self):
        # root wins through its leaf child only if the truncated sibling is not also a P-win
        tree = SampledTree.from_nested(((), ((),)), depth_cutoff=2)
        solution = solve(tree, GameId.NORMAL)
        assert solution.root_status == NodeStatus.NEXT_WIN
        assert reduced_tree(tree, solution).censored


class TestSolverInvariants:
    @pytest.fixture(scope="class")
    def sampled(self):
        laws = (finite([0.3, 0.2, 0.5]), binary(0.8), poisson(1.3))
        return [(dist, seed) for dist in laws for seed in range(40)]

    @pytest.mark.parametrize("game", [GameId.NORMAL, GameId.MISERE])
    def test_move_count_parity(self, sampled, game):
        # a first-player win in the normal game takes an odd number of moves
        first_wins_odd = game == GameId.NORMAL
        for dist, seed in sampled:
            solution = solve(sample_tree(dist, 12, seed=seed), game)
            decided = solution.status != NodeStatus.UNDECIDED
            odd_moves = (solution.index[decided] - 1) % 2 == 1
            next_wins = solution.status[decided] == NodeStatus.NEXT_WIN
            np.testing.assert_array_equal(odd_moves, next_wins if first_wins_odd else ~next_wins)

    @pytest.mark.parametrize("game", [GameId.NORMAL, GameId.MISERE])
    def test_deeper_cutoff_only_refines_statuses(self, sampled, game):
        for dist, seed in sampled:
            shallow = solve(sample_tree(dist, 6, seed=seed), game)
            deep = solve(sample_tree(dist, 11, seed=seed), game)
            decided = shallow.status != NodeStatus.UNDECIDED
            np.testing.assert_array_equal(deep.status[:shallow.status.size][decided],
                                          shallow.status[decided])
            np.testing.assert_array_equal(deep.index[:shallow.index.size][decided],
                                          shallow.index[decided])

    def test_escape_decisions_survive_deeper_cutoffs(self, sampled):
        for dist, seed in sampled:
            shallow = escape_indices(sample_tree(dist, 6, seed=seed))
            deep = escape_indices(sample_tree(dist, 11, seed=seed))
            for coarse, fine in zip(shallow, deep):
                stopped = coarse > 0
                np.testing.assert_array_equal(fine[:coarse.size][stopped], coarse[stopped])

    @pytest.mark.parametrize("game", [GameId.NORMAL, GameId.MISERE])
    def test_reduced_tree_alternates_and_bounds_length(self, sampled, game):
        for dist, seed in sampled:
            tree = sample_tree(dist, 12, seed=seed)
            solution = solve(tree, game)
            reduced = reduced_tree(tree, solution)
            if reduced.censored:
                continue
            kept = set(reduced.nodes.tolist())
            for node in reduced.nodes[1:]:
                parent = int(tree.parent[node])
                assert parent in kept
                assert solution.status[node] != solution.status[parent]
            assert reduced.height <= solution.moves

    def test_forcing_height_never_exceeds_length(self, small_trees):
        for structure in small_trees:
            tree = SampledTree.from_nested(structure)
            for game in (GameId.NORMAL, GameId.MISERE):
                solution = solve(tree, game)
                assert reduced_tree(tree, solution).height <= solution.moves


def within(estimate: float, exact: float, n: int, slack: float = 2e-3) -> bool:
    sigma = math.sqrt(max(exact * (1.0 - exact), 0.0) / n)
    return abs(estimate - exact) <= 5.0 * sigma + slack


class TestMonteCarlo:
    @pytest.mark.parametrize("game,keys", [
        (GameId.NORMAL, ('N', 'P', 'D')),
        (GameId.MISERE, ('Nm', 'Pm', 'Dm')),
    ])
    def test_matches_truncated_recursion(self, analyzer, simulator, game, keys):
        dist = binary(0.6)
        depth, n = 12, 4000
        mc = simulator.monte_carlo(dist, game, depth, n, seed=17)
        exact = analyzer.truncated_outcomes(dist, depth)
        values = (exact.n, exact.p, exact.d) if game == GameId.NORMAL \
            else (exact.n_mis, exact.p_mis, exact.d_mis)
        for key, value in zip(keys, values):
            assert within(mc.estimates[key], value, n), key
        assert mc.samples_used == n
        assert mc.censored_fraction == pytest.approx(mc.estimates[keys[2]])

    def test_escape_matches_truncated_recursion(self, analyzer, simulator):
        dist = finite([0.2, 0.3, 0.5])
        depth, n = 8, 3000
        mc = simulator.monte_carlo(dist, GameId.ESCAPE, depth, n, seed=5)
        exact = analyzer.truncated_outcomes(dist, depth)
        assert within(mc.estimates['S1'], exact.s1, n)
        assert within(mc.estimates['S2'], exact.s2, n)
        assert mc.estimates['E1'] == pytest.approx(1.0 - mc.estimates['S2'])

    def test_lengths_are_recorded(self, simulator):
        mc = simulator.monte_carlo(binary(0.5), GameId.NORMAL, 30, 500, seed=2)
        assert mc.mean_T is not None and mc.mean_T >= 0.0
        assert sum(mc.T_histogram.values()) + mc.censored == mc.samples_used
        assert mc.mean_Tstar is not None
        assert sum(mc.Tstar_histogram.values()) + mc.Tstar_censored == mc.samples_used

    def test_identical_for_any_thread_count(self):
        dist = finite([0.3, 0.2, 0.5])
        single = MonteCarloSimulator(threads=1).monte_carlo(dist, GameId.NORMAL, 10, 300, seed=8)
        pooled = MonteCarloSimulator(threads=2).monte_carlo(dist, GameId.NORMAL, 10, 300, seed=8)
        assert single.estimates == pooled.estimates
        assert single.T_histogram == pooled.T_histogram
        assert single.Tstar_histogram == pooled.Tstar_histogram

    def test_oversized_trees_are_skipped(self):
        simulator = MonteCarloSimulator(threads=1, node_budget=50)
        mc = simulator.monte_carlo(poisson(3.0), GameId.NORMAL, 10, 40, seed=1)
        assert mc.skipped > 0
        assert mc.samples_used + mc.skipped == 40

    def test_default_seed_is_used(self, simulator):
        first = simulator.monte_carlo(binary(0.5), GameId.NORMAL, 6, 50)
        second = simulator.monte_carlo(binary(0.5), GameId.NORMAL, 6, 50, seed=first.seed)
        assert first.estimates == second.estimates

    def test_rejects_empty_runs(self, simulator):
        with pytest.raises(UsageError):
            simulator.monte_carlo(binary(0.5), GameId.NORMAL, 6, 0)

    def test_matches_analytic_outcomes_on_random_laws(self, analyzer, simulator):
        laws = [d for d in (random_distribution(seed, 3) for seed in range(200)) if d.mean() <= 1.3][:4]
        assert len(laws) == 4
        depth, n = 20, 2000
        for i, dist in enumerate(laws):
            exact = analyzer.outcomes(dist)
            cut = analyzer.truncated_outcomes(dist, depth)
            checks = (
                (GameId.NORMAL, {'N': (exact.n, cut.n), 'P': (exact.p, cut.p)}, cut.d),
                (GameId.MISERE, {'Nm': (exact.n_mis, cut.n_mis), 'Pm': (exact.p_mis, cut.p_mis)},
                 cut.d_mis),
                (GameId.ESCAPE, {'S1': (exact.s1, cut.s1), 'E1': (exact.e1, cut.e1)}, None),
            )
            for game, expected, undecided in checks:
                mc = simulator.monte_carlo(dist, game, depth, n, seed=100 + i, with_tstar=False)
                for key, (limit, truncated) in expected.items():
                    gap = abs(limit - truncated)
                    assert within(mc.estimates[key], limit, n, slack=gap + 2e-3), (dist, key)
                if undecided is not None:
                    assert within(mc.censored_fraction, undecided, n), (dist, game)
