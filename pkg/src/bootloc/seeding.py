"""Counter-based seed splitting and deterministic trial fan-out."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Sequence

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    # splitmix64 finalizer, a bijection on 64-bit words
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & MASK64
    return z ^ (z >> 31)


def split_seed(base_seed: int, index: int) -> int:
    """Derive the seed of child ``index`` from ``base_seed``.

    The counter ``base + (index + 1) * golden`` is injective in ``index``
    modulo 2**64 and the mixer is a bijection, so distinct indices can never
    collide for a fixed base.
    """
    if base_seed < 0 or index < 0:
        raise ValueError("seeds and indices must be non-negative")
    return _mix64((base_seed + (index + 1) * _GOLDEN) & MASK64)


def split_seeds(base_seed: int, count: int) -> np.ndarray:
    """Vectorised :func:`split_seed` for indices ``0 .. count-1`` (uint64)."""
    with np.errstate(over="ignore"):
        z = np.uint64(base_seed & MASK64) + (np.arange(1, count + 1, dtype=np.uint64)
                                             * np.uint64(_GOLDEN))
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def map_trials(fn: Callable[..., Any], args: Sequence[tuple], workers: int = 1) -> list:
    """Apply ``fn(*a)`` to every tuple in ``args``, preserving input order.

    Results depend only on ``args``; ``workers`` only changes wall time.
    """
    if workers <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    chunk = max(1, len(args) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*args), chunksize=chunk))
