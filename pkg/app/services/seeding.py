"""
Seed derivation for reproducible parallel Monte Carlo.

Every random stream in the package is a Philox (counter-based) generator
keyed by a 64-bit seed. Child seeds are derived from a parent seed and an
integer key path with numpy's SeedSequence:

    derive_seed(parent, *keys) = SeedSequence(entropy=parent, spawn_key=keys)
                                 .generate_state(1, uint64)[0]

The mixing is stable across numpy releases (it is part of SeedSequence's
documented contract), so a recorded seed reproduces its stream bit-for-bit
regardless of worker count or scheduling.
"""
from typing import Tuple

import numpy as np

# Stream tags used as the first key of a derivation path
MODEL_STREAM = 0
REPLICATE_STREAM = 1
FIELD_STREAM = 2
ZERO_FIELD_STREAM = 3


def derive_seed(parent: int, *keys: int) -> int:
    if parent < 0 or any(key < 0 for key in keys):
        raise ValueError(f"seeds and keys must be nonnegative: parent={parent}, keys={keys}")
    sequence = np.random.SeedSequence(entropy=int(parent), spawn_key=tuple(int(key) for key in keys))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def replicate_seed(root_seed: int, k: int, replicate: int) -> int:
    return derive_seed(root_seed, REPLICATE_STREAM, k, replicate)


def field_seeds(rep_seed: int, count: int, stream: int = FIELD_STREAM) -> Tuple[int, ...]:
    return tuple(derive_seed(rep_seed, stream, index) for index in range(count))
