from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Callable, List, Sequence, TypeVar

import numpy as np
from loguru import logger

T = TypeVar("T")


def replicate_seed(master_seed: int, index: int, stream: Sequence[int] = ()) -> int:
    """64-bit seed for replicate `index`, hashed from (master_seed, *stream, index) by SeedSequence."""
    entropy = [int(master_seed), *(int(s) for s in stream), int(index)]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


def replicate_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def run_indexed(
    fn: Callable[[int], T],
    n: int,
    workers: int = 1,
    label: str = "batch",
) -> List[T]:
    """Evaluate fn(0..n-1) on a thread pool; results come back in index order.

    The first failure is re-raised after logging.
    """
    started = time.perf_counter()
    results: List[T | None] = [None] * n
    if workers <= 1 or n == 1:
        for i in range(n):
            results[i] = fn(i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = {executor.submit(fn, i): i for i in range(n)}
            for future in as_completed(futures):
                i = futures[future]
                try:
                    results[i] = future.result()
                except Exception as e:
                    logger.error(f"{label}: replicate {i} failed: {e}")
                    for other in futures:
                        other.cancel()
                    raise
    logger.info(f"{label}: {n} replicates in {time.perf_counter() - started:.2f}s (workers={workers})")
    return results  # type: ignore[return-value]
