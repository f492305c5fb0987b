"""Seed handling shared by the replicated routines.

Every replicated computation derives one stream per replicate from a root
seed plus an integer key path, so results do not depend on evaluation order
or on the number of workers.
"""

import numbers

import numpy as np


def as_seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, numbers.Integral) and not isinstance(seed, bool):
        if seed < 0:
            raise ValueError("seed must be a non-negative integer")
        return np.random.SeedSequence(int(seed))
    raise TypeError(f"expected an integer seed or SeedSequence, got {type(seed).__name__}")


def child(seed, *key):
    """Seed sequence for the sub-stream ``key`` below ``seed``."""
    ss = as_seed_sequence(seed)
    return np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + tuple(int(k) for k in key))


def stream(seed, *key):
    return np.random.Generator(np.random.PCG64(child(seed, *key)))


def check_generator(rng):
    if not isinstance(rng, np.random.Generator):
        raise TypeError(f"rng must be a numpy Generator, got {type(rng).__name__}")
    return rng
