"""Seeded random substreams and an order-preserving parallel map.

Every stochastic task draws from its own generator keyed by
``(seed, stream name, task index)``, so results never depend on how tasks are
scheduled across workers.
"""

from __future__ import annotations

import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np
from threadpoolctl import threadpool_limits

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "FEPCA_THREADS"


def _stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def substream(seed: int, name: str, index: int = 0) -> np.random.Generator:
    """Independent generator for task ``index`` of stream ``name``."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), _stream_key(name), int(index)])
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, name: str, index: int = 0) -> int:
    """A 64-bit child seed, for handing a stream to a nested routine."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), _stream_key(name), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def default_workers() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _call_single_threaded(args):
    func, item = args
    # pin BLAS to one thread so results are bit-identical for any pool size
    with threadpool_limits(limits=1):
        return func(item)


def parallel_map(func: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> list[R]:
    """``[func(x) for x in items]`` in input order, optionally across processes.

    ``func`` must be picklable (a module-level function or a
    ``functools.partial`` of one) when ``workers > 1``.
    """
    items: Sequence[T] = list(items)
    if workers is None:
        workers = default_workers()
    workers = max(1, min(int(workers), len(items) or 1))
    if workers == 1:
        with threadpool_limits(limits=1):
            return [func(x) for x in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call_single_threaded, [(func, x) for x in items], chunksize=chunk))
