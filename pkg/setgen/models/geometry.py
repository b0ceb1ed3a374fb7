"""
Voxel geometry and vector-field models.

Velocity, displacement and deformation fields all store a Tensor of shape
[B, d, spatial...] in voxel units; channel i is the component along spatial
axis i.
"""
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from setgen.errors import ConfigError, GeometryError, NumericalError
from setgen.tensor import Tensor


@dataclass(frozen=True)
class VolumeGeometry:
    """The voxel domain of a group: 2-D or 3-D, every axis at least 4 voxels."""

    spatial_dims: Tuple[int, ...]
    spacing: Tuple[float, ...] = field(default=None)

    def __post_init__(self):
        dims = tuple(int(s) for s in self.spatial_dims)
        if len(dims) not in (2, 3):
            raise GeometryError(f'volumes must be 2-D or 3-D, got {len(dims)} axes',
                                dimension='rank')
        for axis, size in enumerate(dims):
            if size < 4:
                raise GeometryError(f'axis {axis} has {size} voxels; at least 4 are required',
                                    dimension=f'spatial[{axis}]')
        spacing = self.spacing if self.spacing is not None else (1.0,) * len(dims)
        spacing = tuple(float(s) for s in spacing)
        if len(spacing) != len(dims):
            raise GeometryError(f'spacing {spacing} does not match {len(dims)} axes',
                                dimension='spacing')
        object.__setattr__(self, 'spatial_dims', dims)
        object.__setattr__(self, 'spacing', spacing)

    @property
    def ndim(self) -> int:
        return len(self.spatial_dims)

    @property
    def num_voxels(self) -> int:
        return int(np.prod(self.spatial_dims))

    def check_field(self, values: Tensor, what: str) -> None:
        expected = (self.ndim,) + self.spatial_dims
        if values.ndim != self.ndim + 2 or values.shape[1:] != expected:
            raise GeometryError(
                f'{what} of shape {values.shape} does not match geometry {self.spatial_dims} '
                f'(expected [B, {self.ndim}, {", ".join(map(str, self.spatial_dims))}])',
                dimension='channels' if values.ndim == self.ndim + 2 else 'rank')

    def same_grid(self, other: 'VolumeGeometry') -> bool:
        return self.spatial_dims == other.spatial_dims

    def require_same(self, other: 'VolumeGeometry', what: str = 'geometry') -> None:
        if not self.same_grid(other):
            raise GeometryError(f'{what} mismatch: {self.spatial_dims} vs {other.spatial_dims}',
                                dimension='spatial')

    def to_dict(self):
        return {'spatial_dims': list(self.spatial_dims), 'spacing': list(self.spacing)}


def _field_geometry(values: Tensor, geometry) -> VolumeGeometry:
    if geometry is None:
        geometry = VolumeGeometry(values.shape[2:])
    geometry.check_field(values, 'field')
    return geometry


class _VectorField:
    """Shared behaviour of the three field types."""

    def __init__(self, values: Tensor, geometry: VolumeGeometry = None):
        self.values = values
        self.geometry = _field_geometry(values, geometry)

    @property
    def batch(self) -> int:
        return self.values.shape[0]

    def numpy(self) -> np.ndarray:
        return self.values.numpy()

    def select(self, index: int):
        """Batch element ``index`` as a batch of one, differentiably."""
        return type(self)(self.values[index:index + 1], self.geometry)

    def __repr__(self):
        return f'{type(self).__name__}(shape={self.values.shape})'


class VelocityField(_VectorField):
    """Stationary velocity v in voxels per unit time."""


class DisplacementField(_VectorField):
    """Displacement u with phi(x) = x + u(x)."""

    def __init__(self, values: Tensor, geometry: VolumeGeometry = None):
        super().__init__(values, geometry)
        if not np.all(np.isfinite(values.data)):
            raise NumericalError('displacement field contains non-finite values')


class DeformationField(_VectorField):
    """Absolute target coordinates phi(x) in voxel units."""

    @property
    def map(self) -> Tensor:
        return self.values


@dataclass(frozen=True)
class IntegrationConfig:
    """
    Scaling-and-squaring settings; the time horizon is always [0, 1].

    ``order`` is the interpolation order of the squaring compositions (1 or 3)
    and ``midpoint`` replaces the v / 2^K start by one midpoint step of the
    same length.
    """

    steps: int = 7
    order: int = 3
    midpoint: bool = True

    @classmethod
    def from_config(cls, config) -> 'IntegrationConfig':
        return cls(config['INTEGRATION_STEPS'], config.get('INTEGRATION_ORDER', 3),
                   config.get('INTEGRATION_MIDPOINT', True))

    def __post_init__(self):
        if not 1 <= int(self.steps) <= 12:
            raise ConfigError(f'integration steps must lie in [1, 12], got {self.steps}',
                              field='steps')
        if self.order not in (1, 3):
            raise ConfigError(f'integration order must be 1 or 3, got {self.order}',
                              field='order')

