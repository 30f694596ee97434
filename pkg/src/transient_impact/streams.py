"""Reproducible random streams and path-parallel execution.

Paths are grouped into fixed-size blocks. Block ``b`` draws from a Philox
(counter-based) generator keyed by ``(seed, b)``, so the noise seen by a
given path depends only on the seed and its index, never on how many
workers run or in which order blocks finish. Results are written into
per-path slots and reduced in index order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, NamedTuple, Sequence

import numpy as np

BLOCK_SIZE = 2048
THREADS_ENV = "TIL_THREADS"


class Estimate(NamedTuple):
    """Monte Carlo point estimate with its standard error."""

    value: float
    std_error: float


def estimate(samples) -> Estimate:
    """Sample mean and standard error, summed in index order."""
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n == 0:
        raise ValueError("no samples")
    mean = float(np.sum(x) / n)
    if n < 2:
        return Estimate(mean, float("nan"))
    var = float(np.sum((x - mean) ** 2) / (n - 1))
    return Estimate(mean, float(np.sqrt(var / n)))


def worker_count(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def block_generator(seed: int, block_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(int(block_index),))
    return np.random.Generator(np.random.Philox(ss))


def path_blocks(paths: int, block_size: int = BLOCK_SIZE) -> list[tuple[int, int, int]]:
    """``(block_index, start, stop)`` triples covering ``range(paths)``."""
    out = []
    for b, start in enumerate(range(0, paths, block_size)):
        out.append((b, start, min(start + block_size, paths)))
    return out


def run_blocks(
    fn: Callable[[int, int, int], dict],
    paths: int,
    workers: int | None = None,
    block_size: int = BLOCK_SIZE,
) -> dict[str, np.ndarray]:
    """Run ``fn(block_index, start, stop)`` over all blocks and stitch results.

    ``fn`` returns a dict of arrays whose leading axis indexes the block's
    paths. The stitched arrays have leading axis ``paths``.
    """
    blocks = path_blocks(paths, block_size)
    nworkers = min(worker_count(workers), len(blocks))
    if nworkers <= 1:
        parts = [fn(*blk) for blk in blocks]
    else:
        with ThreadPoolExecutor(max_workers=nworkers) as pool:
            parts = list(pool.map(lambda blk: fn(*blk), blocks))
    keys = parts[0].keys()
    return {k: np.concatenate([p[k] for p in parts], axis=0) for k in keys}

