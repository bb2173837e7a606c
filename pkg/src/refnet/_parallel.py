"""Seed derivation and an order-preserving parallel map.

Every randomized task derives its stream from ``(seed, index)`` so results do
not depend on how many workers run the tasks.
"""

from __future__ import annotations

import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

from ._accel import n_threads

T = TypeVar("T")
R = TypeVar("R")


def child_rng(seed: int, *index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(i) for i in index))
    return np.random.Generator(np.random.PCG64(ss))


def pmap(fn: Callable[[T], R], items: Sequence[T] | Iterable[T], workers: int | None = None) -> list[R]:
    items = list(items)
    workers = n_threads() if workers is None else max(1, workers)
    workers = min(workers, len(items)) if items else 1
    if workers <= 1:
        return [fn(x) for x in items]
    # forkserver: safe when the caller is itself running in a thread pool
    with ProcessPoolExecutor(max_workers=workers, mp_context=mp.get_context("forkserver")) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))
