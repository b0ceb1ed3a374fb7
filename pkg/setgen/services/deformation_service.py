"""
Deformation service: stationary velocity field algebra.

Integration by scaling and squaring, inversion through the negated
velocity, composition, image and label warping, and the conversion from a
registration network's velocity to the template/subject field pair.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.ndimage import map_coordinates

from setgen.errors import ConfigError, GeometryError
from setgen.models.geometry import (DeformationField, DisplacementField, IntegrationConfig,
                                    VelocityField)
from setgen.models.regnet import RegNetParams, predict_velocity
from setgen.tensor import Tensor, concat, grid_sample

logger = logging.getLogger(__name__)

CONVENTIONS = ('template-moving', 'subject-moving')

DEFAULT_INTEGRATION = IntegrationConfig()


def identity_grid(spatial_dims: Tuple[int, ...], batch: int = 1) -> np.ndarray:
    """
    Voxel coordinates of every grid point.

    Returns:
        np.ndarray: [batch, d, spatial...]; channel i holds the index along axis i
    """
    axes = [np.arange(size, dtype=np.float64) for size in spatial_dims]
    grid = np.stack(np.meshgrid(*axes, indexing='ij'))
    return np.array(np.broadcast_to(grid, (batch,) + grid.shape))


def _identity_like(values: Tensor) -> Tensor:
    return Tensor(identity_grid(values.shape[2:], values.shape[0]))


def integrate_svf(v: VelocityField, cfg: IntegrationConfig = DEFAULT_INTEGRATION) -> DeformationField:
    """
    Exponentiate a stationary velocity field by scaling and squaring.

    u starts at the flow of v over time h = 1 / 2^K, either h * v or one
    midpoint step h * v(x + h/2 v(x)) when ``cfg.midpoint`` is set, and is
    composed with itself K times (u <- u + u(id + u)); the result is id + u.

    Args:
        v: Velocity field [B, d, spatial...]
        cfg: Integration settings (K squaring steps, interpolation order, start)

    Returns:
        DeformationField: phi = exp(v)
    """
    grid = _identity_like(v.values)
    h = 1.0 / 2 ** cfg.steps
    if cfg.midpoint:
        u = grid_sample(v.values, grid + v.values * (0.5 * h), order=cfg.order) * h
    else:
        u = v.values * h
    for _ in range(cfg.steps):
        u = u + grid_sample(u, grid + u, order=cfg.order)
    return DeformationField(grid + u, v.geometry)


def invert(v: VelocityField, cfg: IntegrationConfig = DEFAULT_INTEGRATION) -> DeformationField:
    """Inverse deformation exp(-v)."""
    return integrate_svf(VelocityField(-v.values, v.geometry), cfg)


def compose(f: DeformationField, g: DeformationField) -> DeformationField:
    """
    (f o g)(x) = f(g(x)).

    f's displacement is sampled multilinearly at g's coordinates, so a
    constant translation composes exactly even near the border.
    """
    f.geometry.require_same(g.geometry, 'composition geometry')
    if f.values.shape != g.values.shape:
        raise GeometryError(f'cannot compose fields of shapes {f.values.shape} and '
                            f'{g.values.shape}', dimension='batch')
    u_f = f.map - _identity_like(f.map)
    return DeformationField(g.map + grid_sample(u_f, g.map), g.geometry)


def warp(image: Tensor, phi: DeformationField) -> Tensor:
    """
    Resample ``image`` at phi's coordinates (image o phi).

    Args:
        image: Tensor [B, C, spatial...] on phi's grid

    Returns:
        Tensor: same shape as ``image``
    """
    if image.shape[2:] != phi.geometry.spatial_dims:
        raise GeometryError(f'image {image.shape} does not match deformation grid '
                            f'{phi.geometry.spatial_dims}', dimension='spatial')
    return grid_sample(image, phi.map)


def displacement_of(phi: DeformationField) -> DisplacementField:
    """u = phi - id."""
    return DisplacementField(phi.map - _identity_like(phi.map), phi.geometry)


def warp_labels(labels: np.ndarray, phi_map: np.ndarray) -> np.ndarray:
    """
    Nearest-neighbour resampling of an integer label map.

    Args:
        labels: Label map [spatial...]
        phi_map: Coordinates [d, spatial...] (or [1, d, spatial...])

    Returns:
        np.ndarray: int64 label map using only values present in ``labels``
    """
    coords = np.asarray(phi_map, dtype=np.float64)
    if coords.ndim == labels.ndim + 2:
        coords = coords[0]
    if coords.shape != (labels.ndim,) + labels.shape:
        raise GeometryError(f'label map {labels.shape} does not match coordinates {coords.shape}',
                            dimension='spatial')
    warped = map_coordinates(np.asarray(labels), coords, order=0, mode='nearest')
    return warped.astype(np.int64)


@dataclass
class RegistrationFields:
    """
    The two directions of a template/subject registration.

    ``forward`` takes the template toward the subject (template o forward
    resembles the subject); ``inverse`` takes the subject toward the template
    and ``displacement`` is its displacement, the subject-to-template flow.
    """

    velocity: VelocityField
    forward: DeformationField
    inverse: DeformationField

    @property
    def displacement(self) -> DisplacementField:
        return displacement_of(self.inverse)


def tile_batch(x: Tensor, batch: int) -> Tensor:
    """Repeat a [1, ...] tensor ``batch`` times along axis 0, differentiably."""
    if x.shape[0] == batch:
        return x
    if x.shape[0] != 1:
        raise GeometryError(f'cannot tile batch {x.shape[0]} to {batch}', dimension='batch')
    return concat([x] * batch, axis=0)


def register_to_template(template: Tensor, subjects: Tensor, reg_params: RegNetParams,
                         cfg: IntegrationConfig = DEFAULT_INTEGRATION,
                         convention: str = 'template-moving') -> RegistrationFields:
    """
    Predict and integrate the template/subject fields for a batch of subjects.

    With the 'template-moving' convention the net registers the template onto
    each subject, v = Reg(template, subject), giving forward = exp(v) and
    inverse = exp(-v). With 'subject-moving', v = Reg(subject, template),
    inverse = exp(v) and forward = exp(-v).

    Args:
        template: Tensor [1 or B, 1, spatial...]
        subjects: Tensor [B, 1, spatial...]
        reg_params: Registration network parameters (usually frozen)
        cfg: Integration settings
        convention: 'template-moving' or 'subject-moving'

    Returns:
        RegistrationFields
    """
    if convention not in CONVENTIONS:
        raise ConfigError(f"Unknown field convention '{convention}'. "
                          f"Choose from: {', '.join(CONVENTIONS)}", field='convention')
    template = tile_batch(template, subjects.shape[0])
    if convention == 'template-moving':
        v = predict_velocity(template, subjects, reg_params)
        return RegistrationFields(v, integrate_svf(v, cfg), invert(v, cfg))
    v = predict_velocity(subjects, template, reg_params)
    return RegistrationFields(v, invert(v, cfg), integrate_svf(v, cfg))
