"""
Shared fixtures for the gwgames test suite
"""

import math
import os
import sys
from itertools import combinations_with_replacement

import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.analytic import FixedPointAnalyzer  # noqa: E402
from src.offspring import finite, parse_family  # noqa: E402
from src.scan import TransitionScanner  # noqa: E402
from src.simulate import MonteCarloSimulator  # noqa: E402

T_NORMAL = math.sqrt(3.0) / 2.0
T_MISERE = 0.75
T_ESCAPE = 3.0 * 2.0 ** (-5.0 / 3.0)
E1_AT_ESCAPE_ONSET = 2.0 ** (4.0 / 3.0) / 3.0


def binary(t: float):
    return finite([1.0 - t, 0.0, t])


def unordered_trees(max_depth: int):
    """Every tree of depth <= max_depth with 0, 1 or 2 children per node, up to child order"""
    if max_depth == 0:
        return [()]
    smaller = unordered_trees(max_depth - 1)
    trees = [()]
    for k in (1, 2):
        trees.extend(combinations_with_replacement(smaller, k))
    return trees


@pytest.fixture(scope="session")
def analyzer():
    return FixedPointAnalyzer()


@pytest.fixture(scope="session")
def scanner(analyzer):
    return TransitionScanner(analyzer, threads=1)


@pytest.fixture(scope="session")
def simulator():
    return MonteCarloSimulator(threads=1)


@pytest.fixture(scope="session")
def binary_family():
    return parse_family("binary")


@pytest.fixture(scope="session")
def small_trees():
    return unordered_trees(4)
