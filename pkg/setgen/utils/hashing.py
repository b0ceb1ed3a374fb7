"""
Hashing utilities for run and checkpoint fingerprints.

SHA-256 and SHA-512 digests of files and in-memory bytes;
RunManifest records them so reruns can be compared byte for byte.
"""
import hashlib
import os
from typing import Dict, Iterable


def calculate_file_hashes(file_path):
    """
    Calculate SHA-256 and SHA-512 hashes of a file.

    Args:
        file_path: Path to the file

    Returns:
        dict: Dictionary with 'sha256' and 'sha512' hash values (hex)

    Raises:
        FileNotFoundError: If file doesn't exist
    """
    sha256_hash = hashlib.sha256()
    sha512_hash = hashlib.sha512()

    with open(file_path, 'rb') as f:
        while chunk := f.read(1 << 16):
            sha256_hash.update(chunk)
            sha512_hash.update(chunk)

    return {
        'sha256': sha256_hash.hexdigest(),
        'sha512': sha512_hash.hexdigest()
    }


def calculate_data_hashes(data):
    """
    Calculate SHA-256 and SHA-512 hashes of data in memory.

    Args:
        data: Bytes to hash

    Returns:
        dict: Dictionary with 'sha256' and 'sha512' hash values (hex)
    """
    return {
        'sha256': hashlib.sha256(data).hexdigest(),
        'sha512': hashlib.sha512(data).hexdigest()
    }


def hash_tree(paths: Iterable[str], root: str = None) -> Dict[str, str]:
    """
    SHA-256 of every regular file under the given paths.

    Args:
        paths: Files or directories
        root: Keys are made relative to this directory when given

    Returns:
        dict: path -> sha256, sorted by path
    """
    digests = {}
    for path in paths:
        if os.path.isdir(path):
            for dirpath, _, filenames in os.walk(path):
                for filename in filenames:
                    full = os.path.join(dirpath, filename)
                    digests[full] = calculate_file_hashes(full)['sha256']
        elif os.path.isfile(path):
            digests[path] = calculate_file_hashes(path)['sha256']
    if root is not None:
        digests = {os.path.relpath(p, root): h for p, h in digests.items()}
    return dict(sorted(digests.items()))

