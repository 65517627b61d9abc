"""tracemalloc statistics of expensive evaluations, logged at the MEMPROF level."""

from __future__ import annotations

import logging
import tracemalloc
from collections.abc import Callable, Sequence
from functools import wraps
from typing import Any, TypeVar

from udpot.logger import MEMPROF

F = TypeVar("F", bound=Callable[..., Any])

PROFILE_LINES = 10
_IGNORE = (
    tracemalloc.Filter(False, "<frozen importlib._bootstrap>"),
    tracemalloc.Filter(False, "<unknown>"),
    tracemalloc.Filter(False, tracemalloc.__file__),
)


def mem_profile(logger: logging.Logger, limit: int = PROFILE_LINES) -> Callable[[F], F]:
    """Log the allocations of each call while ``logger`` is enabled for MEMPROF.

    Tracing starts on the first profiled call and is left running. Below MEMPROF the
    decorated function is called straight through.

    Example:
        >>> log = logging.getLogger("udpot.verify")
        >>> @mem_profile(log)
        ... def evaluate_level(n):
        ...     ...
    """

    def decorator(func: F) -> F:
        @wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            if not logger.isEnabledFor(MEMPROF):
                return func(*args, **kwargs)
            if not tracemalloc.is_tracing():
                tracemalloc.start()
            before = tracemalloc.take_snapshot().filter_traces(_IGNORE)
            result = func(*args, **kwargs)
            after = tracemalloc.take_snapshot().filter_traces(_IGNORE)
            log_allocations(
                logger, func.__qualname__, after.compare_to(before, "lineno"), limit
            )
            return result

        return wrapper  # type: ignore[return-value]

    return decorator


def log_allocations(
    logger: logging.Logger,
    label: str,
    stats: Sequence[tracemalloc.StatisticDiff],
    limit: int = PROFILE_LINES,
) -> int:
    """Log the largest allocation changes and return the net change in bytes."""
    logger.log(MEMPROF, "[MEMPROF] %s", label)
    for stat in stats[:limit]:
        frame = stat.traceback[0]
        logger.log(
            MEMPROF,
            "[MEMPROF] | %s:%s: %+.1f KiB",
            frame.filename,
            frame.lineno,
            stat.size_diff / 1024,
        )
    total = sum(stat.size_diff for stat in stats)
    logger.log(MEMPROF, "[MEMPROF] | Total allocated size: %+.1f KiB", total / 1024)
    return total
