import concurrent.futures
from typing import Callable, Iterable, TypeVar

from utils.logger import LOGGER

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> list[R]:
    """
    Apply ``fn`` to every item, optionally on a thread pool.

    Results come back in input order whatever the worker count, so callers
    can merge them deterministically.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    LOGGER.debug(f"Fanning {len(items)} tasks out to {workers} workers")
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        try:
            return list(executor.map(fn, items))
        except Exception as e:
            LOGGER.error(f"Worker task failed: {e}")
            raise
