"""Counter-based random streams and deterministic block-parallel mapping.

Every stochastic estimator draws its replications in fixed-size blocks.  Block
``b`` of stream ``name`` under master seed ``s`` always uses the Philox
generator keyed by ``SeedSequence(s, spawn_key=(crc32(name), b))``, so the
concatenated output depends only on ``(s, name, reps, block_size)`` and never
on how many workers process the blocks.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

import numpy as np

T = TypeVar("T")

DEFAULT_BLOCK = 1000


def stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def generator(seed: int, name: str, block: int = 0) -> np.random.Generator:
    """Philox generator for one block of a named stream."""
    if seed < 0:
        raise ValueError("seed must be a nonnegative integer")
    ss = np.random.SeedSequence(int(seed), spawn_key=(stream_key(name), int(block)))
    return np.random.Generator(np.random.Philox(ss))


def block_sizes(reps: int, block_size: int = DEFAULT_BLOCK) -> list[int]:
    if reps < 0:
        raise ValueError("reps must be nonnegative")
    full, rest = divmod(reps, block_size)
    return [block_size] * full + ([rest] if rest else [])


def map_blocks(
    fn: Callable[[np.random.Generator, int], T],
    reps: int,
    seed: int,
    name: str,
    workers: int = 1,
    block_size: int = DEFAULT_BLOCK,
) -> list[T]:
    """Apply ``fn(rng, size)`` to every block; results come back in block order.

    Threads are used because the heavy kernels (numpy, numba with
    ``nogil``) release the GIL and user-supplied model callables need not be
    picklable.
    """
    sizes = block_sizes(reps, block_size)

    def run(b: int) -> T:
        return fn(generator(seed, name, b), sizes[b])

    if workers <= 1 or len(sizes) <= 1:
        return [run(b) for b in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, range(len(sizes))))


def concat_blocks(
    fn: Callable[[np.random.Generator, int], np.ndarray],
    reps: int,
    seed: int,
    name: str,
    workers: int = 1,
    block_size: int = DEFAULT_BLOCK,
) -> np.ndarray:
    parts = map_blocks(fn, reps, seed, name, workers=workers, block_size=block_size)
    if not parts:
        return np.empty(0)
    return np.concatenate(parts)
