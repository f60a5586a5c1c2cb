from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Protocol, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class ParallelMap(Protocol):
    """Ordered map: result i always belongs to item i, whatever the worker count."""

    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> list[R]: ...


class SerialMap:
    threads = 1

    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
        return [fn(item) for item in items]


class ThreadPoolMap:
    def __init__(self, threads: int) -> None:
        self.threads = max(1, int(threads))
        self._executor: ThreadPoolExecutor | None = None

    def __enter__(self) -> "ThreadPoolMap":
        if self.threads > 1:
            self._executor = ThreadPoolExecutor(max_workers=self.threads, thread_name_prefix="matern")
        return self

    def __exit__(self, *exc: object) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
        items = list(items)
        if self._executor is None or len(items) < 2:
            return [fn(item) for item in items]
        logger.debug("Parallel map items=%s threads=%s", len(items), self.threads)
        return list(self._executor.map(fn, items))


def derive_rng(seed: int, *task_key: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, task_key); independent of scheduling."""
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in task_key))
    return np.random.Generator(np.random.Philox(sequence))
