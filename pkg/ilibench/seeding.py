"""
Seed derivation and the PRNG every module shares.

All randomness flows through ``rng(seed)``: numpy's PCG64 bit generator,
seeded with a non-negative 64-bit integer. Shuffles use
``Generator.permutation`` (Fisher-Yates).
"""

import zlib

import numpy as np

PRNG_NAME = "numpy.PCG64"

_MASK64 = (1 << 64) - 1


def _as_entropy(part: int | str) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part) & _MASK64


def derive_seed(*parts: int | str) -> int:
    """Hash an ordered tuple of ints/strings into an independent 64-bit seed.

    derive_seed(run_seed, iteration, role) is how each ILI iteration gets
    its own seeds; derive_seed(base_seed, fraction_index, repetition) is how
    each sweep cell does.
    """
    entropy = [_as_entropy(p) for p in parts]
    state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)
    return int(state[0])


def rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & _MASK64))
