"""Utility package for gwgames"""

from .logger import GamesLogger
from .seeding import derive_sample_seed, sample_rng

__all__ = ['GamesLogger', 'derive_sample_seed', 'sample_rng']
