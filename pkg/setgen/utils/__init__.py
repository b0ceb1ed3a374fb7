"""
Utility modules package.
"""
from setgen.utils.hashing import calculate_file_hashes, calculate_data_hashes, hash_tree
from setgen.utils.parallel import map_ordered
from setgen.utils.reductions import ordered_mean, ordered_sum
from setgen.utils.timing import timed

__all__ = [
    'calculate_file_hashes',
    'calculate_data_hashes',
    'hash_tree',
    'map_ordered',
    'ordered_mean',
    'ordered_sum',
    'timed',
]
