"""Deterministic sample-parallel evaluation.

Per-sample work runs on a thread pool; results are always collected in
sample order and reduced with a fixed pairwise tree, so the output does not
depend on the number of workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")


def map_samples(fn: Callable[[int], T], n: int, threads: int = 1) -> list[T]:
    """``[fn(0), ..., fn(n-1)]`` evaluated on up to ``threads`` workers."""
    if threads < 1:
        raise ValueError("threads must be at least 1")
    if threads == 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=min(threads, n)) as pool:
        return list(pool.map(fn, range(n)))


def pairwise_sum(values: Sequence) -> np.ndarray:
    """Sum along the first axis with a fixed balanced binary tree."""
    items = [np.asarray(v) for v in values]
    if not items:
        raise ValueError("nothing to sum")
    while len(items) > 1:
        nxt = [items[i] + items[i + 1] for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


def mean_and_stderr(values: Sequence[float]) -> tuple[float, float]:
    """Sample mean and standard error with pairwise reductions."""
    x = np.asarray(values, dtype=float)
    n = x.size
    mean = float(pairwise_sum(list(x))) / n
    if n < 2:
        return mean, 0.0
    var = float(pairwise_sum(list((x - mean) ** 2))) / (n - 1)
    return mean, float(np.sqrt(var / n))
