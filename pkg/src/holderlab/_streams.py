"""Seeded random streams and order-invariant reductions.

Every Monte Carlo routine in the package splits its work into fixed-size
chunks. Chunk ``j`` of a task draws from a generator keyed by
``(seed, *stream, j)``, so the output depends only on the seed and the
parameters, never on how many worker threads executed the chunks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

CHUNK_SIZE = 4096

T = TypeVar("T")

_default_workers = 1


def set_default_workers(workers: int) -> None:
    """Set the thread count used when a routine is called with ``workers=None``."""
    global _default_workers
    if workers < 1:
        raise ValueError("workers must be >= 1")
    _default_workers = int(workers)


def get_default_workers() -> int:
    return _default_workers


def generator(seed: int, *stream: int) -> np.random.Generator:
    """PCG64 generator for the substream ``stream`` of ``seed``."""
    key = tuple(int(s) for s in stream)
    ss = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def chunk_sizes(total: int, size: int = CHUNK_SIZE) -> list[int]:
    if total < 0:
        raise ValueError("total must be nonnegative")
    full, rest = divmod(total, size)
    return [size] * full + ([rest] if rest else [])


def parallel_map(fn: Callable[..., T], tasks: Sequence, workers: int | None = None) -> list[T]:
    """Apply ``fn`` to each task; results come back in task order."""
    workers = _default_workers if workers is None else workers
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def mean_and_stderr(values: Iterable[float]) -> tuple[float, float]:
    """Exactly rounded mean and standard error (sample std / sqrt(N)).

    ``math.fsum`` makes the result independent of summation order.
    """
    v = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float)
    n = v.size
    if n == 0:
        return math.nan, math.nan
    mean = math.fsum(v) / n
    if n == 1:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def unit_vectors(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    """Isotropic directions: normalized standard Gaussian vectors."""
    z = rng.standard_normal((count, dim))
    norm = np.linalg.norm(z, axis=1)
    # a zero Gaussian draw has probability zero; guard anyway
    bad = norm == 0.0
    if bad.any():
        z[bad, 0] = 1.0
        norm[bad] = 1.0
    return z / norm[:, None]
