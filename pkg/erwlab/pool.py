import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

logger = logging.getLogger(__name__)

THREADS_ENV = "ERW_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def resolve_workers(requested: Optional[int] = None) -> int:
    """Worker count: ``requested`` (default 1), capped by ERW_THREADS when set."""
    workers = max(1, requested or 1)
    cap = os.getenv(THREADS_ENV)
    if cap:
        try:
            workers = min(workers, max(1, int(cap)))
        except ValueError:
            logger.warning(f"Ignoring non-integer {THREADS_ENV}={cap!r}")
    return workers


def run_ordered(
    func: Callable[[T], R], items: Iterable[T], workers: int = 1
) -> List[R]:
    """Map ``func`` over ``items`` and return results in input order.

    Runs in-process for a single worker; otherwise ``func`` and the items must
    be picklable.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    logger.debug(f"Dispatching {len(items)} tasks to {workers} workers")
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, items))
