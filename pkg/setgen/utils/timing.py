"""
Wall-clock timing helpers.
"""
import logging
import time
from contextlib import contextmanager
from typing import Dict, Optional

logger = logging.getLogger(__name__)


@contextmanager
def timed(label: str, sink: Optional[Dict[str, float]] = None):
    """
    Measure the wall-clock seconds of a block.

    Usage:
        timings = {}
        with timed('encode', timings):
            ...
        timings['encode']  # seconds

    Args:
        label: Key under which the duration is stored
        sink: Dict receiving ``label -> seconds`` (accumulated if repeated)
    """
    start = time.perf_counter()
    try:
        yield
    finally:
        elapsed = time.perf_counter() - start
        if sink is not None:
            sink[label] = sink.get(label, 0.0) + elapsed
        logger.debug(f'{label} took {elapsed:.3f}s')
