"""
Ordered parallel map over independent per-subject work.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar('T')
R = TypeVar('R')


def map_ordered(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """
    Apply ``fn`` to every item, returning results in input order.

    Args:
        fn: Pure function of one item
        items: Work items
        threads: Worker threads; 1 runs inline on the calling thread

    Returns:
        list: ``[fn(item) for item in items]``
    """
    items = list(items)
    threads = max(1, int(threads or 1))
    if threads == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    workers = min(threads, len(items))
    logger.debug(f'Mapping {len(items)} items over {workers} threads')
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix='setgen') as pool:
        return list(pool.map(fn, items))
