"""Thread-parallel, order-deterministic reductions."""

from __future__ import annotations

import logging
import os
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

import numpy as np

logger = logging.getLogger("udpot.parallel")

THREADS_VAR = "UDPOT_THREADS"

T = TypeVar("T")
R = TypeVar("R")

_threads: int | None = None


def set_threads(n: int | None) -> None:
    """Cap the number of worker threads; None falls back to the environment."""
    global _threads
    if n is not None and n < 1:
        msg = f"thread count must be >= 1, got {n}"
        raise ValueError(msg)
    _threads = n


def get_threads() -> int:
    """Resolved worker count: explicit setting, then UDPOT_THREADS, then 1."""
    if _threads is not None:
        return _threads
    env = os.environ.get(THREADS_VAR)
    if env:
        try:
            value = int(env)
        except ValueError as e:
            msg = f"{THREADS_VAR} must be a positive integer, got {env!r}"
            raise ValueError(msg) from e
        if value >= 1:
            return value
    return 1


def ordered_map(
    fn: Callable[[T], R], items: Iterable[T], threads: int | None = None
) -> list[R]:
    """Map fn over items on a thread pool, returning results in input order."""
    items = list(items)
    workers = min(threads or get_threads(), max(len(items), 1))
    if workers == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _row_chunks(n_rows: int, workers: int) -> Sequence[slice]:
    bounds = np.linspace(0, n_rows, workers + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _neumaier_block(matrix: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Compensated sum over columns for a block of rows.

    matrix has shape (rows, n) and values shape (n, k); the accumulation order is the
    column order, the same for every row.
    """
    rows, n = matrix.shape
    total = np.zeros((rows, values.shape[1]))
    comp = np.zeros_like(total)
    for j in range(n):
        term = matrix[:, j, None] * values[None, j, :]
        t = total + term
        big = np.abs(total) >= np.abs(term)
        comp += np.where(big, (total - t) + term, (term - t) + total)
        total = t
    return total + comp


def compensated_matvec(
    matrix: np.ndarray, values: np.ndarray, threads: int | None = None
) -> np.ndarray:
    """Row sums of matrix[i, j] * values[j] with Neumaier compensation.

    Args:
        matrix:
            ndarray, shape (m, n)
        values:
            ndarray, shape (n,) or (n, k) for k right-hand sides at once
        threads:
            int, optional, worker cap; rows are split in contiguous chunks

    Returns:
        ndarray of shape (m,) or (m, k). Each entry is accumulated in the same fixed
        column order regardless of the thread count, so results are bit-identical for
        any number of workers.
    """
    matrix = np.asarray(matrix, dtype=float)
    vector = np.ndim(values) == 1
    rhs = np.asarray(values, dtype=float).reshape(matrix.shape[1], -1)
    workers = threads or get_threads()
    chunks = _row_chunks(matrix.shape[0], max(1, workers))
    parts = ordered_map(lambda s: _neumaier_block(matrix[s], rhs), chunks, workers)
    out = np.concatenate(parts, axis=0) if parts else np.zeros((0, rhs.shape[1]))
    return out[:, 0] if vector else out
