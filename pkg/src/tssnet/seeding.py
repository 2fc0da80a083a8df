"""Deterministic seed derivation.

Every stochastic stage derives its RNG from one root seed plus integer
context (image index, epoch number, ...) via ``numpy.random.SeedSequence``.
The derivation depends only on the context values, never on thread or
iteration order, so results are reproducible under any parallel schedule.
"""

from __future__ import annotations

import numpy as np


def derive_rng(*context: int) -> np.random.Generator:
    """RNG keyed by the given integer context tuple."""
    return np.random.default_rng(np.random.SeedSequence(list(context)))


def derive_seed(*context: int) -> int:
    """A plain integer seed keyed by the given context (for SceneSpec etc.)."""
    return int(np.random.SeedSequence(list(context)).generate_state(1, np.uint64)[0])
