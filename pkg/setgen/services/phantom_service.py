"""
Phantom service: synthetic subject groups with a known center.

One base anatomy of nested, boundary-perturbed rings is warped by smooth
velocity fields whose group mean is exactly zero, so the base is the
group's center by construction.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from setgen.models.geometry import IntegrationConfig, VelocityField
from setgen.models.volume import PhantomConfig, SubjectGroup, SubjectVolume
from setgen.services.deformation_service import integrate_svf, warp, warp_labels
from setgen.tensor import Tensor

logger = logging.getLogger(__name__)

TEXTURE_AMPLITUDE = 0.03
BOUNDARY_PERTURBATION = 0.08
OUTER_RADIUS = 0.8
# velocities are multiples of this so the centered group mean is exactly zero
VELOCITY_QUANTUM = 2.0 ** -20


@dataclass
class PhantomSet:
    group: SubjectGroup
    center: SubjectVolume
    velocities: np.ndarray
    config: PhantomConfig


def band_centers(n_labels: int) -> np.ndarray:
    """Intensity band center per label id (index 0 is background)."""
    centers = np.zeros(n_labels + 1)
    for k in range(1, n_labels + 1):
        centers[k] = 0.2 + 0.7 * k / n_labels
    return centers


def band_limits(label: int, n_labels: int, noise: float) -> Tuple[float, float]:
    """Closed interval every voxel of ``label`` falls in."""
    center = band_centers(n_labels)[label]
    spread = TEXTURE_AMPLITUDE + noise
    return max(0.0, center - spread), min(1.0, center + spread)


def _smooth_noise(rng: np.random.Generator, shape, sigma: float) -> np.ndarray:
    """Gaussian-blurred white noise scaled to max |value| = 1."""
    field = gaussian_filter(rng.standard_normal(shape), sigma=sigma, mode='reflect')
    peak = np.max(np.abs(field))
    return field / peak if peak > 0 else field


def _base_anatomy(rng, cfg: PhantomConfig):
    dims = cfg.spatial_dims
    axes = [(np.arange(s) - (s - 1) / 2.0) / (s / 2.0) for s in dims]
    grids = np.meshgrid(*axes, indexing='ij')
    radius = np.sqrt(sum(g * g for g in grids))
    radius = radius + BOUNDARY_PERTURBATION * _smooth_noise(rng, dims, cfg.smoothness)
    labels = np.zeros(dims, dtype=np.int64)
    for k in range(1, cfg.n_labels + 1):
        threshold = OUTER_RADIUS * (cfg.n_labels - k + 1) / cfg.n_labels
        labels += (radius < threshold).astype(np.int64)
    texture = TEXTURE_AMPLITUDE * _smooth_noise(rng, dims, max(1.0, cfg.smoothness / 3.0))
    return labels, texture


def _intensity(labels: np.ndarray, texture: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return np.where(labels > 0, centers[labels] + texture, 0.0)


def _centered_velocities(rng, cfg: PhantomConfig) -> np.ndarray:
    n, d, dims = cfg.n_subjects, len(cfg.spatial_dims), cfg.spatial_dims
    raw = np.stack([
        np.stack([gaussian_filter(rng.standard_normal(dims), sigma=cfg.smoothness, mode='reflect')
                  for _ in range(d)])
        for _ in range(n)
    ])
    raw -= raw.mean(axis=0, keepdims=True)
    peak = np.max(np.abs(raw))
    if cfg.magnitude == 0 or peak == 0:
        return np.zeros_like(raw)
    raw *= cfg.magnitude / peak
    quanta = np.rint(raw / VELOCITY_QUANTUM).astype(np.int64)
    quanta[0] -= quanta.sum(axis=0)
    return quanta.astype(np.float64) * VELOCITY_QUANTUM


def gen_phantoms(cfg: PhantomConfig, integration: IntegrationConfig = IntegrationConfig()) -> PhantomSet:
    """
    Generate a phantom group and its ground-truth center.

    Args:
        cfg: Phantom settings (group size, geometry, labels, deformation, noise, seed)
        integration: Scaling-and-squaring settings for the subject deformations

    Returns:
        PhantomSet: subjects, the undeformed base as center, and the velocities
    """
    rng = np.random.default_rng(cfg.seed)
    centers = band_centers(cfg.n_labels)
    labels, texture = _base_anatomy(rng, cfg)
    base = _intensity(labels, texture, centers)
    center = SubjectVolume('center', base, labels)

    velocities = _centered_velocities(rng, cfg)
    subjects = []
    for i in range(cfg.n_subjects):
        phi = integrate_svf(VelocityField(Tensor(velocities[i:i + 1])), integration)
        warped_labels = warp_labels(labels, phi.map.data)
        warped_texture = warp(Tensor(texture[None, None]), phi).data[0, 0]
        intensity = _intensity(warped_labels, warped_texture, centers)
        if cfg.noise > 0:
            intensity = intensity + np.clip(rng.normal(0.0, cfg.noise / 2.0, size=intensity.shape),
                                            -cfg.noise, cfg.noise)
        subjects.append(SubjectVolume(f'sub-{i:03d}', np.clip(intensity, 0.0, 1.0), warped_labels))

    logger.info(f'Generated {cfg.n_subjects} phantoms of shape {cfg.spatial_dims} '
                f'(magnitude {cfg.magnitude}, seed {cfg.seed})')
    return PhantomSet(SubjectGroup(subjects), center, velocities, cfg)
