"""
Volume I/O service.

Raw little-endian volumes with JSON sidecars, single-file NIfTI-1
ingestion, PGM slice export and the on-disk layouts of phantom datasets
and template results. Formats are described in docs/FORMATS.md.
"""
import glob
import io
import json
import logging
import os
import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import nibabel as nib
import numpy as np
from PIL import Image

from setgen.errors import ConfigError, DataFormatError, GeometryError
from setgen.models.geometry import VolumeGeometry
from setgen.models.results import TemplateMethod, TemplateResult
from setgen.models.volume import SubjectGroup, SubjectVolume, VolumeKind

logger = logging.getLogger(__name__)

STORED_DTYPES = {
    VolumeKind.IMAGE: 'float32',
    VolumeKind.LABELS: 'uint16',
    VolumeKind.VELOCITY: 'float32',
    VolumeKind.DISPLACEMENT: 'float32',
}

NIFTI_HEADER_SIZE = 348
NIFTI_MAGIC = b'n+1\x00'
NIFTI_DATATYPES = {2: 'uint8', 4: 'int16', 16: 'float32'}

_SUBJECT_IMAGE = re.compile(r'^(?P<sid>.+)_image\.raw$')


@dataclass
class StoredVolume:
    data: np.ndarray
    kind: VolumeKind
    spacing: Tuple[float, ...]


def _paths(path: str) -> Tuple[str, str]:
    stem, ext = os.path.splitext(path)
    if ext not in ('.raw', '.json'):
        stem = path
    return stem + '.raw', stem + '.json'


def write_volume(path: str, array: np.ndarray, kind, spacing: Sequence[float] = None) -> str:
    """
    Write a raw volume and its JSON sidecar.

    Args:
        path: Target path; '.raw' and '.json' share its stem
        array: Data in row-major order
        kind: VolumeKind or its value
        spacing: Voxel size per spatial axis (defaults to 1.0)

    Returns:
        str: Path of the raw file
    """
    kind = VolumeKind(kind)
    dtype = np.dtype(STORED_DTYPES[kind]).newbyteorder('<')
    array = np.asarray(array)
    if kind is VolumeKind.LABELS:
        if array.size and (array.min() < 0 or array.max() > np.iinfo(np.uint16).max):
            raise DataFormatError(f'label ids must fit in uint16 for {path}', path=path)
    elif not np.all(np.isfinite(array)):
        raise DataFormatError(f'refusing to write non-finite values to {path}', path=path)
    spatial_rank = array.ndim - 1 if kind in (VolumeKind.VELOCITY, VolumeKind.DISPLACEMENT) \
        else array.ndim
    spacing = list(spacing) if spacing is not None else [1.0] * spatial_rank

    raw_path, json_path = _paths(path)
    directory = os.path.dirname(os.path.abspath(raw_path))
    os.makedirs(directory, exist_ok=True)
    with open(raw_path, 'wb') as f:
        f.write(np.ascontiguousarray(array.astype(dtype)).tobytes())
    sidecar = {
        'shape': list(array.shape),
        'dtype': STORED_DTYPES[kind],
        'kind': kind.value,
        'spacing': [float(s) for s in spacing],
        'byte_order': 'little',
    }
    with open(json_path, 'w') as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
    return raw_path


def read_volume(path: str) -> StoredVolume:
    """
    Read a raw volume via its sidecar.

    Raises:
        DataFormatError: On a missing or malformed sidecar, or a blob whose
            length disagrees with it
    """
    raw_path, json_path = _paths(path)
    try:
        with open(json_path) as f:
            sidecar = json.load(f)
    except FileNotFoundError:
        raise DataFormatError(f'missing sidecar {json_path}', path=json_path)
    except json.JSONDecodeError as e:
        raise DataFormatError(f'malformed sidecar {json_path}: {e}', path=json_path)

    try:
        kind = VolumeKind(sidecar['kind'])
        shape = tuple(int(s) for s in sidecar['shape'])
        dtype = np.dtype(sidecar['dtype']).newbyteorder('<')
        spacing = tuple(float(s) for s in sidecar.get('spacing', []))
    except (KeyError, TypeError, ValueError) as e:
        raise DataFormatError(f'invalid sidecar {json_path}: {e}', path=json_path)
    if sidecar['dtype'] != STORED_DTYPES[kind]:
        raise DataFormatError(f'{json_path}: {kind.value} volumes are stored as '
                              f'{STORED_DTYPES[kind]}, not {sidecar["dtype"]}', path=json_path)

    if not os.path.isfile(raw_path):
        raise DataFormatError(f'missing volume data {raw_path}', path=raw_path)
    with open(raw_path, 'rb') as f:
        payload = f.read()
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if len(payload) != expected:
        raise DataFormatError(
            f'{raw_path} holds {len(payload)} bytes but its sidecar describes {expected}',
            path=raw_path)
    data = np.frombuffer(payload, dtype=dtype).reshape(shape)
    data = data.astype(np.int64 if kind is VolumeKind.LABELS else np.float64)
    return StoredVolume(data, kind, spacing)


def read_subject(image_path: str, labels_path: str = None, subject_id: str = None) -> SubjectVolume:
    """Load one subject from raw or NIfTI-1 files."""
    if image_path.endswith('.nii'):
        volume = read_nifti1(image_path)
        intensities, spacing = volume.intensities, volume.geometry.spacing
    else:
        stored = read_volume(image_path)
        if stored.kind is not VolumeKind.IMAGE:
            raise DataFormatError(f'{image_path} is a {stored.kind.value} volume, not an image',
                                  path=image_path)
        intensities, spacing = stored.data, stored.spacing
    labels = None
    if labels_path:
        stored = read_volume(labels_path)
        if stored.kind is not VolumeKind.LABELS:
            raise DataFormatError(f'{labels_path} is not a label volume', path=labels_path)
        labels = stored.data
    sid = subject_id or _subject_id(image_path)
    geometry = VolumeGeometry(intensities.shape, spacing or None)
    return SubjectVolume(sid, intensities, labels, geometry)


def _subject_id(path: str) -> str:
    name = os.path.basename(path)
    for suffix in ('_image.raw', '_image.json', '.raw', '.nii', '.json'):
        if name.endswith(suffix):
            return name[:-len(suffix)]
    return name


# NIfTI-1

def read_nifti1(path: str) -> SubjectVolume:
    """
    Read an uncompressed single-file NIfTI-1 volume.

    Intensities are min-max normalized to [0, 1]; spacing comes from pixdim.

    Raises:
        DataFormatError: Bad magic, unsupported datatype or truncated file
    """
    with open(path, 'rb') as f:
        payload = f.read()
    if len(payload) < NIFTI_HEADER_SIZE:
        raise DataFormatError(f'{path}: truncated NIfTI-1 header ({len(payload)} bytes)',
                              path=path)
    if payload[344:348] != NIFTI_MAGIC:
        raise DataFormatError(f'{path}: bad NIfTI-1 magic {payload[344:348]!r}', path=path)
    try:
        header = nib.Nifti1Header.from_fileobj(io.BytesIO(payload[:NIFTI_HEADER_SIZE]))
    except Exception as e:
        raise DataFormatError(f'{path}: unreadable NIfTI-1 header ({e})', path=path)

    code = int(header['datatype'])
    if code not in NIFTI_DATATYPES:
        raise DataFormatError(f'{path}: unsupported NIfTI datatype code {code}', path=path,
                              datatype=code)
    shape = tuple(int(s) for s in header.get_data_shape())
    while len(shape) > 3 and shape[-1] == 1:
        shape = shape[:-1]
    if len(shape) == 3 and shape[-1] == 1:
        shape = shape[:-1]
    if len(shape) not in (2, 3):
        raise DataFormatError(f'{path}: expected a 2-D or 3-D volume, got shape {shape}',
                              path=path)

    dtype = header.get_data_dtype()
    offset = int(header['vox_offset'])
    count = int(np.prod(shape))
    if offset + count * dtype.itemsize > len(payload):
        raise DataFormatError(f'{path}: truncated voxel data', path=path)
    data = np.frombuffer(payload, dtype=dtype, count=count, offset=offset)
    data = data.reshape(shape, order='F').astype(np.float64)

    low, high = float(data.min()), float(data.max())
    intensities = (data - low) / (high - low) if high > low else np.zeros_like(data)
    spacing = tuple(float(z) for z in header.get_zooms()[:len(shape)])

    return SubjectVolume(_subject_id(path), intensities, None, VolumeGeometry(shape, spacing))


def write_nifti1(path: str, array: np.ndarray, spacing: Sequence[float] = None,
                 dtype='float32') -> str:
    """Write a single-file NIfTI-1 volume (used for fixtures and interchange)."""
    array = np.asarray(array)
    spacing = list(spacing) if spacing is not None else [1.0] * array.ndim
    affine = np.diag(list(spacing) + [1.0] * (4 - len(spacing)))
    image = nib.Nifti1Image(array.astype(dtype), affine)
    image.set_data_dtype(np.dtype(dtype))
    nib.save(image, path)
    return path


# Slice export

def to_pixels(values: np.ndarray) -> np.ndarray:
    """[0, 1] -> uint8 with floor(x * 255 + 0.5), so 0.5 maps to 128."""
    return np.floor(np.clip(values, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


_AXES = {'x': 0, 'y': 1, 'z': 2}


def export_slice(volume: np.ndarray, axis, index: int, path: str) -> str:
    """
    Write one slice of a volume as a binary PGM (P5, maxval 255).

    Args:
        volume: 2-D or 3-D intensities in [0, 1]; for 2-D input the whole
            image is written and ``axis``/``index`` are ignored
        axis: 'x', 'y', 'z' or 0..2
        index: Slice index along ``axis``
        path: Output file

    Raises:
        ConfigError: If the axis or index is out of range
    """
    volume = np.asarray(volume, dtype=np.float64)
    if volume.ndim == 2:
        plane = volume
    elif volume.ndim == 3:
        axis_index = _AXES.get(axis, axis)
        if axis_index not in (0, 1, 2):
            raise ConfigError(f"axis must be one of x, y, z; got {axis!r}", field='axis')
        if not 0 <= index < volume.shape[axis_index]:
            raise ConfigError(f'slice index {index} outside [0, {volume.shape[axis_index]})',
                              field='index')
        plane = np.take(volume, index, axis=axis_index)
    else:
        raise GeometryError(f'cannot slice a {volume.ndim}-D volume', dimension='rank')

    Image.fromarray(to_pixels(plane), mode='L').save(path, format='PPM')
    return path


# Dataset layout

def write_dataset(directory: str, group: SubjectGroup, center: SubjectVolume = None,
                  metadata: Dict = None) -> List[str]:
    """Write sub-XXX_image/labels volumes plus an optional ground truth and phantoms.json."""
    os.makedirs(directory, exist_ok=True)
    written = []
    for subject in group:
        spacing = subject.geometry.spacing
        written.append(write_volume(os.path.join(directory, f'{subject.subject_id}_image.raw'),
                                    subject.intensities, VolumeKind.IMAGE, spacing))
        if subject.labels is not None:
            written.append(write_volume(
                os.path.join(directory, f'{subject.subject_id}_labels.raw'),
                subject.labels, VolumeKind.LABELS, spacing))
    if center is not None:
        truth = os.path.join(directory, 'ground_truth')
        written.append(write_volume(os.path.join(truth, 'center_image.raw'),
                                    center.intensities, VolumeKind.IMAGE))
        if center.labels is not None:
            written.append(write_volume(os.path.join(truth, 'center_labels.raw'),
                                        center.labels, VolumeKind.LABELS))
    if metadata is not None:
        with open(os.path.join(directory, 'phantoms.json'), 'w') as f:
            json.dump(metadata, f, indent=2, sort_keys=True)
    return written


def load_dataset(directory: str) -> SubjectGroup:
    """
    Load every ``<id>_image.raw`` (with ``<id>_labels.raw`` when present), sorted by id.

    Raises:
        DataFormatError: If the directory holds no subjects
    """
    if not os.path.isdir(directory):
        raise DataFormatError(f'dataset directory not found: {directory}', path=directory)
    subjects = []
    for name in sorted(os.listdir(directory)):
        match = _SUBJECT_IMAGE.match(name)
        if not match:
            continue
        sid = match.group('sid')
        labels = os.path.join(directory, f'{sid}_labels.raw')
        subjects.append(read_subject(os.path.join(directory, name),
                                     labels if os.path.isfile(labels) else None, sid))
    if not subjects:
        raise DataFormatError(f'no *_image.raw subjects in {directory}', path=directory)
    logger.info(f'Loaded {len(subjects)} subjects from {directory}')
    return SubjectGroup(subjects)


def load_ground_truth(directory: str) -> Optional[SubjectVolume]:
    path = os.path.join(directory, 'ground_truth', 'center_image.raw')
    if not os.path.isfile(path):
        return None
    labels = os.path.join(directory, 'ground_truth', 'center_labels.raw')
    return read_subject(path, labels if os.path.isfile(labels) else None, 'center')


def expand_inputs(pattern: str) -> List[str]:
    """Sorted paths matching a glob, skipping sidecars."""
    paths = sorted(p for p in glob.glob(pattern) if not p.endswith('.json'))
    if not paths:
        raise DataFormatError(f'no files match {pattern!r}', path=pattern)
    return paths


def load_group(image_paths: Sequence[str], label_paths: Sequence[str] = None) -> SubjectGroup:
    """Load subjects from explicit paths; label paths pair up by subject id."""
    labels_by_id = {}
    for path in label_paths or []:
        labels_by_id[_subject_id(path).replace('_labels', '')] = path
    subjects = []
    for path in image_paths:
        sid = _subject_id(path)
        subjects.append(read_subject(path, labels_by_id.get(sid), sid))
    if label_paths and any(s.labels is None for s in subjects):
        missing = [s.subject_id for s in subjects if s.labels is None]
        raise DataFormatError(f'no label map for subjects {missing}')
    return SubjectGroup(subjects)


# Template result layout

def write_template_result(directory: str, result: TemplateResult) -> Dict[str, str]:
    """
    Write ``template_image`` plus per-subject velocity/displacement fields and
    ``template.json``.

    Returns:
        dict: relative file name -> absolute path for each written raw file
    """
    os.makedirs(directory, exist_ok=True)
    written = {'template_image.raw': write_volume(
        os.path.join(directory, 'template_image.raw'), result.template, VolumeKind.IMAGE)}
    subjects = []
    for reg in result.registrations:
        for kind, array in ((VolumeKind.VELOCITY, reg.velocity),
                            (VolumeKind.DISPLACEMENT, reg.displacement)):
            name = f'{reg.subject_id}_{kind.value}.raw'
            written[name] = write_volume(os.path.join(directory, name), array, kind)
        subjects.append(reg.subject_id)
    manifest = {
        'method': result.method.value,
        'subjects': subjects,
        'template_shape': list(result.template.shape),
        'provenance': result.provenance,
    }
    with open(os.path.join(directory, 'template.json'), 'w') as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=str)
    return written


def read_template_result(directory: str) -> TemplateResult:
    """
    Read the template image and method of a template directory.

    Stored fields are outputs for inspection; evaluation re-registers the
    group so warped label maps are available.
    """
    try:
        with open(os.path.join(directory, 'template.json')) as f:
            manifest = json.load(f)
    except FileNotFoundError:
        raise DataFormatError(f'{directory} has no template.json', path=directory)
    template = read_volume(os.path.join(directory, 'template_image.raw')).data
    return TemplateResult(template, TemplateMethod.parse(manifest['method']), [],
                          manifest.get('provenance', {}))
