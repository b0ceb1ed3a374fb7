"""
Model checkpoint format.

Layout (all integers little-endian)::

    bytes 0..7     uint64 manifest length M
    bytes 8..8+M   UTF-8 JSON manifest, keys sorted
    bytes 8+M..    float64 blob, tensors concatenated in manifest order

The manifest holds ``format``, ``version``, ``kind`` (vae | regnet),
``arch``, ``tensors`` (name -> shape, offset, length in bytes relative to
the blob start), ``metadata`` and the blob's ``sha256``.
"""
import json
import logging
import os
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Any, Dict

import numpy as np

from setgen.errors import CheckpointError
from setgen.utils.hashing import calculate_data_hashes

logger = logging.getLogger(__name__)

FORMAT_NAME = 'setgen-checkpoint'
FORMAT_VERSION = 1
KINDS = ('vae', 'regnet')

_HEADER = struct.Struct('<Q')


@dataclass
class ModelCheckpoint:
    """In-memory checkpoint: architecture, named tensors and metadata."""

    kind: str
    arch: Dict[str, Any]
    tensors: 'OrderedDict[str, np.ndarray]'
    metadata: Dict[str, Any] = field(default_factory=dict)
    version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.kind not in KINDS:
            raise CheckpointError(f'unknown checkpoint kind {self.kind!r}', kind_found=self.kind)

    def require_kind(self, kind: str) -> 'ModelCheckpoint':
        if self.kind != kind:
            raise CheckpointError(f'expected a {kind} checkpoint, got {self.kind}')
        return self

    def blob(self) -> bytes:
        return b''.join(np.ascontiguousarray(a, dtype='<f8').tobytes() for a in self.tensors.values())

    def fingerprint(self) -> str:
        return calculate_data_hashes(self.blob())['sha256']


def encode_checkpoint(checkpoint: ModelCheckpoint) -> bytes:
    """Serialize a checkpoint to bytes."""
    entries = OrderedDict()
    offset = 0
    chunks = []
    for name, array in checkpoint.tensors.items():
        data = np.ascontiguousarray(array, dtype='<f8').tobytes()
        entries[name] = {'shape': list(np.shape(array)), 'offset': offset, 'length': len(data)}
        offset += len(data)
        chunks.append(data)
    blob = b''.join(chunks)
    manifest = {
        'format': FORMAT_NAME,
        'version': checkpoint.version,
        'kind': checkpoint.kind,
        'arch': checkpoint.arch,
        'tensors': entries,
        'metadata': checkpoint.metadata,
        'sha256': calculate_data_hashes(blob)['sha256'],
    }
    header = json.dumps(manifest, sort_keys=True).encode('utf-8')
    return _HEADER.pack(len(header)) + header + blob


def decode_checkpoint(payload: bytes, source: str = '<bytes>') -> ModelCheckpoint:
    """
    Parse checkpoint bytes.

    Raises:
        CheckpointError: On truncation, a bad manifest, a hash mismatch or
            tensors that overrun the blob
    """
    if len(payload) < _HEADER.size:
        raise CheckpointError(f'{source}: file too short for a checkpoint header', path=source)
    (length,) = _HEADER.unpack_from(payload, 0)
    end = _HEADER.size + length
    if end > len(payload):
        raise CheckpointError(f'{source}: manifest length {length} overruns the file', path=source)
    try:
        manifest = json.loads(payload[_HEADER.size:end].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f'{source}: unreadable manifest ({e})', path=source)

    if manifest.get('format') != FORMAT_NAME:
        raise CheckpointError(f'{source}: not a SETGen checkpoint', path=source)
    if manifest.get('version') != FORMAT_VERSION:
        raise CheckpointError(
            f'{source}: unsupported checkpoint version {manifest.get("version")}', path=source)

    blob = payload[end:]
    if calculate_data_hashes(blob)['sha256'] != manifest.get('sha256'):
        raise CheckpointError(f'{source}: tensor blob does not match its sha256', path=source)

    tensors = OrderedDict()
    for name, entry in manifest['tensors'].items():
        shape = tuple(entry['shape'])
        offset, size = int(entry['offset']), int(entry['length'])
        if offset + size > len(blob) or size != 8 * int(np.prod(shape, dtype=np.int64)):
            raise CheckpointError(f'{source}: tensor {name!r} does not fit the blob',
                                  path=source, tensor=name)
        tensors[name] = np.frombuffer(blob, dtype='<f8', count=size // 8,
                                      offset=offset).astype(np.float64).reshape(shape)

    return ModelCheckpoint(kind=manifest['kind'], arch=manifest['arch'], tensors=tensors,
                           metadata=manifest.get('metadata', {}), version=manifest['version'])


def save_checkpoint(checkpoint: ModelCheckpoint, path: str) -> str:
    """
    Write a checkpoint atomically (temporary file then rename).

    Returns:
        str: sha256 of the written file
    """
    payload = encode_checkpoint(checkpoint)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp_path = f'{path}.tmp'
    with open(tmp_path, 'wb') as f:
        f.write(payload)
    os.replace(tmp_path, path)
    logger.debug(f'Wrote {checkpoint.kind} checkpoint to {path} ({len(payload)} bytes)')
    return calculate_data_hashes(payload)['sha256']


def load_checkpoint(path: str, kind: str = None) -> ModelCheckpoint:
    """
    Read a checkpoint from disk.

    Args:
        path: Checkpoint file
        kind: Optional expected kind ('vae' or 'regnet')

    Raises:
        CheckpointError: If the file is missing, malformed or of another kind
    """
    if not os.path.isfile(path):
        raise CheckpointError(f'checkpoint not found: {path}', path=path)
    with open(path, 'rb') as f:
        checkpoint = decode_checkpoint(f.read(), source=path)
    if kind is not None:
        checkpoint.require_kind(kind)
    return checkpoint
