"""Deterministic seed derivation for nested experiment loops.

Every randomized quantity in the harness is keyed by a path of integers
(base seed, sigma index, trial, instance, ...) so reruns with the same
config reproduce bit-identical results regardless of execution order.
"""

import numpy as np


def child_seed(*path: int) -> int:
    """Derive a 63-bit seed from a path of non-negative integers.

    Uses :class:`numpy.random.SeedSequence`, which is algorithmic (no
    process-level hash randomization), so the mapping is stable across
    runs and platforms.
    """
    if not path:
        raise ValueError("child_seed needs at least one path component")
    ss = np.random.SeedSequence([int(p) for p in path])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


def spawn_seeds(base: int, n: int, *prefix: int) -> list[int]:
    """Pre-assign one child seed per work item (no seed stealing across workers)."""
    return [child_seed(base, *prefix, i) for i in range(n)]
