"""
Loss service: every training objective and their weighted total.

Conventions: reconstruction, symmetry, template and warped-pair terms are
means over voxels; the KL term is summed over latent elements and averaged
over the batch.
"""
import logging
import math
from dataclasses import dataclass, fields, replace
from typing import Callable, Dict, Optional

from setgen.errors import ConfigError
from setgen.models.geometry import DeformationField, DisplacementField, VelocityField
from setgen.plugins.similarity.mse import mse
from setgen.services.deformation_service import tile_batch, warp
from setgen.tensor import Tensor, as_tensor, exp, mean, square
from setgen.tensor import functional as F

logger = logging.getLogger(__name__)

TERMS = ('sim', 'kl', 'even', 'temp', 'warped')

# Which of the template-related terms each ablation row keeps.
ABLATION_PRESETS = {
    'a': frozenset(),
    'b': frozenset({'temp'}),
    'c': frozenset({'warped'}),
    'd': frozenset({'even'}),
    'e': frozenset({'temp', 'warped'}),
    'f': frozenset({'temp', 'warped', 'even'}),
}


@dataclass(frozen=True)
class LossWeights:
    sim: float = 300.0
    kl: float = 0.0002
    even: float = 5.0
    temp: float = 100.0
    warped: float = 200.0

    def __post_init__(self):
        for term in TERMS:
            value = float(getattr(self, term))
            if not math.isfinite(value) or value < 0:
                raise ConfigError(f'loss weight {term} must be finite and >= 0, got {value}',
                                  field=term)
            object.__setattr__(self, term, value)

    @classmethod
    def from_config(cls, config) -> 'LossWeights':
        return cls(sim=config['LAMBDA_SIM'], kl=config['LAMBDA_KL'], even=config['LAMBDA_EVEN'],
                   temp=config['LAMBDA_TEMP'], warped=config['LAMBDA_WARPED'])

    @classmethod
    def for_ablation(cls, tag: str, base: Optional['LossWeights'] = None) -> 'LossWeights':
        """
        Weights for one ablation row: VAE terms always on, disabled template terms zeroed.

        Raises:
            ConfigError: If ``tag`` is not one of a..f
        """
        base = base or cls()
        if tag not in ABLATION_PRESETS:
            raise ConfigError(f"Unknown ablation '{tag}'. Choose from: "
                              f"{', '.join(sorted(ABLATION_PRESETS))}", field='ablation')
        enabled = ABLATION_PRESETS[tag]
        return replace(base, **{t: 0.0 for t in ('even', 'temp', 'warped') if t not in enabled})

    def to_dict(self) -> Dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class LossParts:
    """Unweighted scalar loss tensors."""

    sim: Tensor
    kl: Tensor
    even: Tensor
    temp: Tensor
    warped: Tensor


@dataclass
class LossBreakdown:
    sim: float
    kl: float
    even: float
    temp: float
    warped: float
    total: float
    objective: Tensor = None

    def is_finite(self) -> bool:
        return all(math.isfinite(getattr(self, t)) for t in TERMS + ('total',))

    def to_record(self, **extra) -> Dict[str, float]:
        record = dict(extra)
        record.update({t: getattr(self, t) for t in TERMS + ('total',)})
        return record


def recon_loss(x, x_hat) -> Tensor:
    """Mean squared reconstruction error."""
    return mse(x, x_hat)


def kl_loss(mu, log_var) -> Tensor:
    """-1/2 sum(1 + log_var - mu^2 - exp(log_var)) per sample, averaged over the batch."""
    mu, log_var = as_tensor(mu), as_tensor(log_var)
    batch = mu.shape[0] if mu.ndim > 0 else 1
    terms = 1.0 + log_var - square(mu) - exp(log_var)
    return F.sum(terms) * (-0.5 / batch)


def _field_values(u) -> Tensor:
    if isinstance(u, (VelocityField, DisplacementField, DeformationField)):
        return u.values
    return as_tensor(u)


def even_loss(u1, u2) -> Tensor:
    """Mean over voxels of |u1 + u2|^2 (summed over vector components)."""
    total = _field_values(u1) + _field_values(u2)
    return mean(F.sum(square(total), axis=1))


def temp_loss(template: Tensor, image1: Tensor, image2: Tensor, phi1: DeformationField,
              phi2: DeformationField, similarity: Callable = mse) -> Tensor:
    """Sim(template o phi1, image1) + Sim(template o phi2, image2)."""
    t1 = tile_batch(template, image1.shape[0])
    t2 = tile_batch(template, image2.shape[0])
    return similarity(warp(t1, phi1), image1) + similarity(warp(t2, phi2), image2)


def warped_loss(image1: Tensor, image2: Tensor, inv1: DeformationField, inv2: DeformationField,
                similarity: Callable = mse) -> Tensor:
    """Sim(image1 o inv1, image2 o inv2): both subjects moved onto the template."""
    return similarity(warp(image1, inv1), warp(image2, inv2))


def gradient_loss(v) -> Tensor:
    """Mean squared forward difference of a field, summed over spatial axes."""
    values = _field_values(v)
    total = None
    for axis in range(2, values.ndim):
        upper = [slice(None)] * values.ndim
        lower = [slice(None)] * values.ndim
        upper[axis] = slice(1, None)
        lower[axis] = slice(None, -1)
        term = mean(square(values[tuple(upper)] - values[tuple(lower)]))
        total = term if total is None else total + term
    return total


def total_loss(parts: LossParts, weights: LossWeights) -> LossBreakdown:
    """
    Weighted sum of the loss parts.

    Returns:
        LossBreakdown: float terms for logging plus the differentiable objective
    """
    objective = None
    for term in TERMS:
        contribution = getattr(parts, term) * getattr(weights, term)
        objective = contribution if objective is None else objective + contribution
    values = {term: getattr(parts, term).item() for term in TERMS}
    return LossBreakdown(total=objective.item(), objective=objective, **values)
