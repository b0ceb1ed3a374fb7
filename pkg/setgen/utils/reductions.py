"""
Order-independent reductions.

Floating-point addition is not associative, so summing the same values in a
different order can change the last bits. These reductions sort along the
stacked axis before summing, which makes the result a function of the
multiset of inputs only.
"""
from typing import Sequence

import numpy as np


def ordered_sum(arrays: Sequence[np.ndarray]) -> np.ndarray:
    """Elementwise sum of same-shape arrays, bitwise invariant to their order."""
    if len(arrays) == 0:
        raise ValueError('ordered_sum needs at least one array')
    stacked = np.stack([np.asarray(a, dtype=np.float64) for a in arrays])
    stacked = np.sort(stacked, axis=0)
    total = stacked[0].copy()
    for row in stacked[1:]:
        total += row
    return total


def ordered_mean(arrays: Sequence[np.ndarray]) -> np.ndarray:
    """Elementwise mean of same-shape arrays, bitwise invariant to their order."""
    return ordered_sum(arrays) / float(len(arrays))
