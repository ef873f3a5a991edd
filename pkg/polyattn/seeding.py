"""Seeded random number generation.

Every random draw in polyattn comes from numpy's ``PCG64`` bit generator
seeded through a ``SeedSequence``. A seed is any integer, reduced modulo
2**64. Sub-streams are addressed by a spawn key, so the stream for
``(seed, 3)`` is the same whether or not ``(seed, 0..2)`` were ever drawn.
"""

import numpy as np

SEED_MODULUS = 2**64


def normalize_seed(seed: int) -> int:
    return int(seed) % SEED_MODULUS


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Return a PCG64 generator for ``seed`` and an optional sub-stream key."""
    sequence = np.random.SeedSequence(entropy=normalize_seed(seed), spawn_key=tuple(stream))
    return np.random.Generator(np.random.PCG64(sequence))


def derive_seed(seed: int, *keys: int) -> int:
    """A child 64-bit seed addressed by ``keys`` under ``seed``."""
    sequence = np.random.SeedSequence(
        entropy=normalize_seed(seed), spawn_key=tuple(int(k) for k in keys)
    )
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def trial_seed(master_seed: int, trial_index: int) -> int:
    """Derive the 64-bit seed of one trial from the master seed.

    The derivation depends only on ``(master_seed, trial_index)``, never on
    which trials ran before, so trials may run in any order or in parallel.
    """
    return derive_seed(master_seed, trial_index)
