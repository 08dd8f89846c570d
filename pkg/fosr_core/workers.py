"""
FOSR Workers

Thread-pool fan-out for independent tasks (tuning candidates, simulation
replicates). Results land in pre-indexed slots, so the output order never
depends on completion order.
"""

import os
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import TypeVar

from fosr_core.errors import ConfigError

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "FOSR_THREADS"


def resolve_worker_count(requested: int | None = None) -> int:
    """
    Number of worker threads to use.

    Starts from the CPU count, capped by ``FOSR_THREADS`` and then by
    ``requested`` when given.
    """
    count = os.cpu_count() or 1
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got '{env}'") from None
        if cap < 1:
            raise ConfigError(f"{THREADS_ENV} must be >= 1, got {cap}")
        count = min(count, cap)
    if requested is not None:
        if requested < 1:
            raise ConfigError(f"threads must be >= 1, got {requested}")
        count = min(count, requested)
    return max(1, count)


def map_ordered(
    func: Callable[[T], R],
    items: Sequence[T],
    workers: int = 1,
    on_done: Callable[[int, R], None] | None = None,
) -> list[R]:
    """
    Apply ``func`` to every item, possibly concurrently, keeping input order.

    Args:
        func: Task body; exceptions propagate to the caller.
        items: Task inputs.
        workers: Thread count; 1 runs inline.
        on_done: Called as ``on_done(index, result)`` after each task, from
            the calling thread.
    """
    results: list[R | None] = [None] * len(items)
    if workers <= 1 or len(items) <= 1:
        for idx, item in enumerate(items):
            results[idx] = func(item)
            if on_done:
                on_done(idx, results[idx])
        return results  # type: ignore[return-value]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(func, item): idx for idx, item in enumerate(items)}
        for future in as_completed(futures):
            idx = futures[future]
            results[idx] = future.result()
            if on_done:
                on_done(idx, results[idx])
    return results  # type: ignore[return-value]
