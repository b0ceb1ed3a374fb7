"""
Template service: group template generation and groupwise registration.

Per-subject work (encoding, registration) is independent and runs through
``map_ordered``; every average uses ``ordered_mean`` so results do not
depend on subject order.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from setgen.errors import ConfigError, GeometryError
from setgen.models.geometry import IntegrationConfig
from setgen.models.regnet import RegNetParams
from setgen.models.results import SubjectRegistration, TemplateMethod, TemplateResult
from setgen.models.vae import VAEParams, decode, encode
from setgen.models.volume import SubjectGroup, SubjectVolume
from setgen.services.deformation_service import register_to_template, warp, warp_labels
from setgen.tensor import Tensor
from setgen.utils.parallel import map_ordered
from setgen.utils.reductions import ordered_mean

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineOptions:
    integration: IntegrationConfig = field(default_factory=IntegrationConfig)
    convention: str = 'template-moving'
    threads: int = 1

    @classmethod
    def from_config(cls, config, threads: Optional[int] = None) -> 'PipelineOptions':
        return cls(IntegrationConfig.from_config(config), config['FIELD_CONVENTION'],
                   threads if threads is not None else config['THREADS'])


DEFAULT_OPTIONS = PipelineOptions()


def _register_subject(subject: SubjectVolume, template: np.ndarray, reg: RegNetParams,
                      options: PipelineOptions) -> SubjectRegistration:
    fields = register_to_template(Tensor(template[None, None]), subject.as_tensor(), reg,
                                  options.integration, options.convention)
    warped = warp(subject.as_tensor(), fields.inverse).data[0, 0]
    labels = None
    if subject.labels is not None:
        labels = warp_labels(subject.labels, fields.inverse.map.data)
    return SubjectRegistration(
        subject_id=subject.subject_id,
        velocity=fields.velocity.numpy()[0],
        deformation=fields.forward.numpy()[0],
        inverse=fields.inverse.numpy()[0],
        displacement=fields.displacement.numpy()[0],
        warped_image=warped,
        warped_labels=labels,
    )


def register_group(group: SubjectGroup, template: np.ndarray, reg: RegNetParams,
                   options: PipelineOptions = DEFAULT_OPTIONS) -> List[SubjectRegistration]:
    """
    Register every subject to a template.

    Args:
        group: Subjects
        template: Template intensities [spatial...]
        reg: Registration parameters
        options: Integration, field convention and thread count

    Returns:
        list: One SubjectRegistration per subject, in group order; label maps
            are warped by nearest-neighbour sampling of the same map
    """
    template = np.asarray(template, dtype=np.float64)
    if template.shape != group.geometry.spatial_dims:
        raise GeometryError(f'template {template.shape} does not match subjects '
                            f'{group.geometry.spatial_dims}', dimension='spatial')
    return map_ordered(lambda s: _register_subject(s, template, reg, options), group.subjects,
                       options.threads)


def _provenance(group: SubjectGroup, **extra):
    info = {'group_size': len(group), 'subjects': sorted(s.subject_id for s in group)}
    info.update(extra)
    return info


def encode_group(group: SubjectGroup, vae: VAEParams, threads: int = 1) -> List[np.ndarray]:
    """Deterministic latent (mu) of every subject."""
    return map_ordered(lambda s: encode(s.as_tensor(), vae, sample=False).mu.data,
                       group.subjects, threads)


def generate_template(group: SubjectGroup, vae: VAEParams, reg: RegNetParams,
                      options: PipelineOptions = DEFAULT_OPTIONS) -> TemplateResult:
    """
    Decode the mean latent code of the group and register every subject to it.

    Cost is linear in the group size: one encode and one registration per subject.
    """
    latents = encode_group(group, vae, options.threads)
    z_bar = ordered_mean(latents)
    template = decode(Tensor(z_bar), vae).data[0, 0]
    registrations = register_group(group, template, reg, options)
    logger.info(f'Generated template for {len(group)} subjects')
    return TemplateResult(template, TemplateMethod.SETGEN, registrations, _provenance(group))


def refine_template(result: TemplateResult, group: SubjectGroup, reg: RegNetParams,
                    options: PipelineOptions = DEFAULT_OPTIONS) -> TemplateResult:
    """
    One refinement step: average the subjects warped onto the current template,
    then re-register the group to the refined template.
    """
    registrations = result.registrations
    if not registrations or any(r.warped_image is None for r in registrations):
        registrations = register_group(group, result.template, reg, options)
    template = np.clip(ordered_mean([r.warped_image for r in registrations]), 0.0, 1.0)
    registrations = register_group(group, template, reg, options)
    provenance = dict(result.provenance, refined_from=result.method.value)
    return TemplateResult(template, TemplateMethod.SETGEN_PLUS, registrations, provenance)


def naive_average(group: SubjectGroup, reg: RegNetParams,
                  options: PipelineOptions = DEFAULT_OPTIONS) -> TemplateResult:
    """Voxelwise mean of the unregistered subjects."""
    template = ordered_mean([s.intensities for s in group])
    registrations = register_group(group, template, reg, options)
    return TemplateResult(template, TemplateMethod.NAIVE_AVERAGE, registrations,
                          _provenance(group))


def ave_baseline(group: SubjectGroup, reg: RegNetParams, iters: int = 6,
                 options: PipelineOptions = DEFAULT_OPTIONS) -> TemplateResult:
    """
    Iterative averaging: start from the voxelwise mean, then ``iters`` times
    register every subject to the template and average the warped subjects.
    """
    if iters < 0:
        raise ValueError(f'iters must be >= 0, got {iters}')
    template = ordered_mean([s.intensities for s in group])
    for step in range(iters):
        registrations = register_group(group, template, reg, options)
        template = np.clip(ordered_mean([r.warped_image for r in registrations]), 0.0, 1.0)
        logger.debug(f'ave iteration {step + 1}/{iters}')
    registrations = register_group(group, template, reg, options)
    return TemplateResult(template, TemplateMethod.AVE, registrations,
                          _provenance(group, iterations=iters))


def build_template(method, group: SubjectGroup, reg: RegNetParams, vae: VAEParams = None,
                   options: PipelineOptions = DEFAULT_OPTIONS, ave_iters: int = 6) -> TemplateResult:
    """Dispatch on a TemplateMethod (or its value)."""
    method = TemplateMethod.parse(method)
    if method in (TemplateMethod.SETGEN, TemplateMethod.SETGEN_PLUS):
        if vae is None:
            raise ConfigError(f'{method.value} needs a trained VAE', field='vae')
        result = generate_template(group, vae, reg, options)
        if method is TemplateMethod.SETGEN_PLUS:
            result = refine_template(result, group, reg, options)
        return result
    if method is TemplateMethod.AVE:
        return ave_baseline(group, reg, ave_iters, options)
    return naive_average(group, reg, options)
