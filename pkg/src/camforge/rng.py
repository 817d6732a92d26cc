"""Derived random streams.

Every stochastic step draws from a generator keyed by
``(master_seed, generation, slot, purpose)`` so results never depend on
scheduling or evaluation order.
"""
import zlib

import numpy as np


def purpose_code(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def derive_seed(master_seed: int, *keys) -> np.random.SeedSequence:
    entropy = [int(master_seed) & 0xFFFFFFFFFFFFFFFF]
    for k in keys:
        entropy.append(purpose_code(k) if isinstance(k, str) else int(k) & 0xFFFFFFFFFFFFFFFF)
    return np.random.SeedSequence(entropy)


def derive_rng(master_seed: int, *keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, *keys))


def derive_int(master_seed: int, *keys) -> int:
    """A 63-bit integer seed, for APIs that take plain ints."""
    return int(derive_seed(master_seed, *keys).generate_state(2, np.uint32).view(np.uint64)[0] >> 1)
