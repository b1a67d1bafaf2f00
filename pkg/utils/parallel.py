"""
FirmCast - Parallel Map

Ordered thread-pool map capped by the runtime thread setting.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """
    Apply fn to every item, preserving input order in the result.

    Args:
        fn: Function to apply
        items: Inputs
        threads: Worker cap; 1 runs inline

    Returns:
        Results in input order
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
