"""
Deterministic per-sample seeding
Each Monte Carlo sample draws from its own stream keyed by (master seed, index)
"""

import hashlib

import numpy as np


def _hash_to_u64(text: str) -> int:
    digest = hashlib.sha256(text.encode("ascii")).digest()
    return int.from_bytes(digest[:8], "big", signed=False)


def derive_sample_seed(master_seed: int, sample_index: int) -> int:
    """Stable seed for one sample, independent of how samples are scheduled"""
    if sample_index < 0:
        raise ValueError("sample index must be non-negative")
    return _hash_to_u64(f"{master_seed}:sample:{sample_index}")


def sample_rng(master_seed: int, sample_index: int) -> np.random.Generator:
    """numpy Generator for one sample"""
    return np.random.default_rng(derive_sample_seed(master_seed, sample_index))
