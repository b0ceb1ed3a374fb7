"""
Subject volume models.

A SubjectVolume is an intensity image in [0, 1] with an optional integer
label map on the same grid; a SubjectGroup is an ordered list of them.
"""
import enum
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from setgen.errors import ConfigError, DataFormatError, GeometryError
from setgen.models.geometry import VolumeGeometry
from setgen.tensor import Tensor


class VolumeKind(enum.Enum):
    """What a stored array represents."""
    IMAGE = 'image'
    LABELS = 'labels'
    VELOCITY = 'velocity'
    DISPLACEMENT = 'displacement'


@dataclass
class SubjectVolume:
    """One subject: intensities in [0, 1] plus an optional label map."""

    subject_id: str
    intensities: np.ndarray
    labels: Optional[np.ndarray] = None
    geometry: VolumeGeometry = None

    def __post_init__(self):
        self.intensities = np.ascontiguousarray(self.intensities, dtype=np.float64)
        if self.geometry is None:
            self.geometry = VolumeGeometry(self.intensities.shape)
        elif self.intensities.shape != self.geometry.spatial_dims:
            raise GeometryError(
                f'subject {self.subject_id}: intensities {self.intensities.shape} do not '
                f'match geometry {self.geometry.spatial_dims}', dimension='spatial')
        if not np.all(np.isfinite(self.intensities)):
            raise DataFormatError(f'subject {self.subject_id}: non-finite intensities')
        if self.intensities.min() < 0.0 or self.intensities.max() > 1.0:
            raise DataFormatError(f'subject {self.subject_id}: intensities outside [0, 1]')
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != self.intensities.shape:
                raise GeometryError(
                    f'subject {self.subject_id}: label map {labels.shape} does not match '
                    f'intensities {self.intensities.shape}', dimension='labels')
            if labels.size and labels.min() < 0:
                raise DataFormatError(f'subject {self.subject_id}: negative label ids')
            self.labels = np.ascontiguousarray(labels, dtype=np.int64)

    def as_tensor(self) -> Tensor:
        """Intensities as a [1, 1, spatial...] tensor."""
        return Tensor(self.intensities[None, None])

    def label_ids(self) -> List[int]:
        if self.labels is None:
            return []
        return sorted(int(k) for k in np.unique(self.labels) if k != 0)


@dataclass
class SubjectGroup:
    """Ordered subjects sharing one geometry."""

    subjects: List[SubjectVolume] = field(default_factory=list)

    def __post_init__(self):
        if not self.subjects:
            raise ConfigError('a subject group needs at least one subject', field='subjects')
        reference = self.subjects[0].geometry
        for subject in self.subjects[1:]:
            reference.require_same(subject.geometry, f'subject {subject.subject_id} geometry')

    def __len__(self) -> int:
        return len(self.subjects)

    def __iter__(self) -> Iterator[SubjectVolume]:
        return iter(self.subjects)

    def __getitem__(self, index) -> SubjectVolume:
        return self.subjects[index]

    @property
    def geometry(self) -> VolumeGeometry:
        return self.subjects[0].geometry

    @property
    def has_labels(self) -> bool:
        return all(s.labels is not None for s in self.subjects)

    def intensity_stack(self) -> np.ndarray:
        """[N, 1, spatial...] array of all intensities."""
        return np.stack([s.intensities[None] for s in self.subjects])

    def label_ids(self) -> List[int]:
        ids = set()
        for subject in self.subjects:
            ids.update(subject.label_ids())
        return sorted(ids)

    def subset(self, indices: Sequence[int]) -> 'SubjectGroup':
        return SubjectGroup([self.subjects[i] for i in indices])

    def reordered(self, order: Sequence[int]) -> 'SubjectGroup':
        return self.subset(order)


@dataclass(frozen=True)
class PhantomConfig:
    """Settings for a synthetic phantom group."""

    n_subjects: int = 16
    spatial_dims: Tuple[int, ...] = (64, 64)
    n_labels: int = 4
    smoothness: float = 6.0
    magnitude: float = 3.0
    noise: float = 0.02
    seed: int = 0

    def __post_init__(self):
        geometry = VolumeGeometry(self.spatial_dims)
        if self.n_subjects < 2:
            raise ConfigError(f'a phantom group needs at least 2 subjects, got {self.n_subjects}',
                              field='n_subjects')
        if self.n_labels < 1:
            raise ConfigError(f'at least one label is required, got {self.n_labels}',
                              field='n_labels')
        limit = min(geometry.spatial_dims) / 8.0
        if not 0.0 <= self.magnitude <= limit:
            raise ConfigError(
                f'deformation magnitude {self.magnitude} exceeds {limit:g} voxels '
                f'(1/8 of the smallest axis)', field='magnitude')
        if self.smoothness <= 0:
            raise ConfigError(f'smoothness must be positive, got {self.smoothness}',
                              field='smoothness')
        if self.noise < 0:
            raise ConfigError(f'noise must be nonnegative, got {self.noise}', field='noise')

    @property
    def geometry(self) -> VolumeGeometry:
        return VolumeGeometry(self.spatial_dims)

    def to_dict(self):
        return {
            'n_subjects': self.n_subjects,
            'spatial_dims': list(self.spatial_dims),
            'n_labels': self.n_labels,
            'smoothness': self.smoothness,
            'magnitude': self.magnitude,
            'noise': self.noise,
            'seed': self.seed,
        }
