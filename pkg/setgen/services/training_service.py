"""
Training service: registration pretraining and siamese VAE training.

Both loops are single-threaded and fully determined by their seed. Each
iteration appends one JSON record to an optional JSON-lines log; parameters
that last produced a finite loss are written to ``<checkpoint>.last_good``
before a divergence is reported.
"""
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Tuple

import numpy as np

from setgen.errors import ConfigError, NumericalError
from setgen.models.checkpoint import save_checkpoint
from setgen.models.geometry import IntegrationConfig
from setgen.models.regnet import RegNetParams, predict_velocity
from setgen.models.vae import LatentCode, VAEParams, decode, encode
from setgen.models.volume import SubjectGroup
from setgen.plugins.similarity.mse import mse
from setgen.services.deformation_service import integrate_svf, register_to_template, warp
from setgen.services.loss_service import (LossBreakdown, LossParts, LossWeights, even_loss,
                                          gradient_loss, kl_loss, recon_loss, temp_loss,
                                          total_loss, warped_loss)
from setgen.services.optim_service import AdamState, ScheduleConfig, adam_step, cosine_lr
from setgen.tensor import DiffGraph, Tensor, backward, concat

logger = logging.getLogger(__name__)

# Validated registration nets reach this registered/unregistered MSE ratio.
VALIDATION_TARGET_RATIO = 0.5


def sample_pairs(n_subjects: int, seed: int) -> Iterator[Tuple[int, int]]:
    """
    Endless stream of unordered subject pairs (i < j).

    Every pass over the stream visits all n(n-1)/2 pairs once in a freshly
    shuffled order, so pairs are uniform and never repeat within a pass.

    Raises:
        ConfigError: With fewer than two subjects
    """
    if n_subjects < 2:
        raise ConfigError(f'pair sampling needs at least 2 subjects, got {n_subjects}',
                          field='n_subjects')
    pairs = np.array(list(itertools.combinations(range(n_subjects), 2)), dtype=np.int64)
    rng = np.random.default_rng(seed)
    while True:
        for index in rng.permutation(len(pairs)):
            i, j = pairs[index]
            yield int(i), int(j)


class _JsonLinesLog:
    """Append-only JSON-lines writer; a None path discards records."""

    def __init__(self, path: Optional[str]):
        self.path = path
        self._file = None

    def __enter__(self):
        if self.path:
            self._file = open(self.path, 'w')
        return self

    def write(self, record: Dict) -> None:
        if self._file is not None:
            self._file.write(json.dumps(record) + '\n')

    def __exit__(self, exc_type, exc, tb):
        if self._file is not None:
            self._file.close()
        return False


def _save_last_good(params, checkpoint_path: Optional[str], metadata: Dict) -> None:
    if checkpoint_path and params is not None:
        path = f'{checkpoint_path}.last_good'
        save_checkpoint(params.to_checkpoint(metadata), path)
        logger.error(f'Wrote last finite parameters to {path}')


# Registration pretraining

@dataclass
class PretrainResult:
    params: RegNetParams
    history: List[Dict] = field(default_factory=list)
    stats: Dict = field(default_factory=dict)
    metadata: Dict = field(default_factory=dict)


def _ordered_pair(rng: np.random.Generator, pair: Tuple[int, int]) -> Tuple[int, int]:
    i, j = pair
    return (j, i) if rng.random() < 0.5 else (i, j)


def registration_loss(moving: Tensor, fixed: Tensor, params: RegNetParams,
                      integration: IntegrationConfig, smoothness: float):
    """MSE(moving o exp(v), fixed) + smoothness * mean |grad v|^2."""
    v = predict_velocity(moving, fixed, params)
    warped = warp(moving, integrate_svf(v, integration))
    sim = mse(warped, fixed)
    smooth = gradient_loss(v)
    return sim + smooth * smoothness, sim, smooth


def validation_pairs(n_subjects: int, count: int, seed: int) -> List[Tuple[int, int]]:
    """Fixed held-out ordered pairs (moving, fixed), distinct subjects."""
    rng = np.random.default_rng([seed, 2])
    pairs = []
    for _ in range(count):
        i, j = rng.choice(n_subjects, size=2, replace=False)
        pairs.append((int(i), int(j)))
    return pairs


def registration_stats(group: SubjectGroup, params: RegNetParams, pairs,
                       integration: IntegrationConfig) -> Dict:
    """Mean unregistered and registered MSE over validation pairs."""
    before, after = [], []
    for i, j in pairs:
        moving, fixed = group[i].as_tensor(), group[j].as_tensor()
        v = predict_velocity(moving, fixed, params)
        warped = warp(moving, integrate_svf(v, integration))
        before.append(mse(moving, fixed).item())
        after.append(mse(warped, fixed).item())
    unregistered = float(np.mean(before)) if before else 0.0
    registered = float(np.mean(after)) if after else 0.0
    return {
        'validation_pairs': len(pairs),
        'validation_unregistered_mse': unregistered,
        'validation_registered_mse': registered,
        'validation_ratio': registered / unregistered if unregistered > 0 else None,
    }


def pretrain_registration(group: SubjectGroup, params: RegNetParams, iters: int, seed: int,
                          lr: float = 1e-3, smoothness: float = 0.01,
                          integration: IntegrationConfig = IntegrationConfig(),
                          n_validation: int = 16, log_path: str = None,
                          checkpoint_path: str = None, log_every: int = 50) -> PretrainResult:
    """
    Train the registration network on random subject pairs.

    Args:
        group: Training subjects (at least two)
        params: Initial registration parameters, updated in place
        iters: Number of Adam steps
        seed: Seed for pair order and direction
        lr: Adam learning rate
        smoothness: Weight of the velocity-gradient penalty
        integration: Scaling-and-squaring settings
        n_validation: Held-out pairs used for the final statistics
        log_path: Optional JSON-lines log (one record per iteration)
        checkpoint_path: Final checkpoint path; also stem of ``.last_good``
        log_every: Progress logging cadence

    Returns:
        PretrainResult: trained params, per-iteration history, validation stats

    Raises:
        NumericalError: If the loss becomes non-finite
    """
    if iters < 1:
        raise ConfigError(f'iters must be >= 1, got {iters}', field='iters')
    pairs = sample_pairs(len(group), seed)
    direction_rng = np.random.default_rng([seed, 1])
    state = AdamState(lr=lr)
    params.unfreeze()
    metadata = {'seed': seed, 'lr': lr, 'smoothness': smoothness,
                'integration_steps': integration.steps, 'integration_order': integration.order,
                'integration_midpoint': integration.midpoint}
    history = []
    last_good = None

    with _JsonLinesLog(log_path) as log:
        for it in range(iters):
            moving_index, fixed_index = _ordered_pair(direction_rng, next(pairs))
            moving = group[moving_index].as_tensor()
            fixed = group[fixed_index].as_tensor()
            try:
                with DiffGraph() as graph:
                    loss, sim, smooth = registration_loss(moving, fixed, params, integration,
                                                          smoothness)
                value = loss.item()
                if not math.isfinite(value):
                    raise NumericalError(f'registration loss diverged at iteration {it}',
                                         iteration=it)
            except NumericalError:
                _save_last_good(last_good, checkpoint_path, dict(metadata, iteration=it))
                raise

            last_good = params.copy()
            params.zero_grad()
            backward(loss, graph)
            adam_step(params.named_parameters(), state, lr)

            record = {'iter': it, 'lr': lr, 'loss': value, 'sim': sim.item(),
                      'smooth': smooth.item()}
            log.write(record)
            history.append(record)
            if log_every and (it % log_every == 0 or it == iters - 1):
                logger.info(f'pretrain iter {it}/{iters}: loss {value:.6f}')

    stats = registration_stats(group, params,
                               validation_pairs(len(group), n_validation, seed), integration)
    ratio = stats['validation_ratio']
    stats['validation_target_met'] = ratio is not None and ratio <= VALIDATION_TARGET_RATIO
    metadata.update(iterations=iters, **stats)
    logger.info(f'Registration validation MSE {stats["validation_registered_mse"]:.6f} '
                f'(unregistered {stats["validation_unregistered_mse"]:.6f})')
    if not stats['validation_target_met']:
        logger.warning(f'Registration validation MSE ratio {ratio} misses the '
                       f'{VALIDATION_TARGET_RATIO} target after {iters} iterations')
    if checkpoint_path:
        save_checkpoint(params.to_checkpoint(metadata), checkpoint_path)
    return PretrainResult(params, history, stats, metadata)


# Siamese training

@dataclass
class TrainConfig:
    epochs: int = 3
    pairs_per_epoch: int = 500
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    integration: IntegrationConfig = field(default_factory=IntegrationConfig)
    base_lr: float = 1e-4
    min_lr: float = 0.0
    schedule_period_epochs: int = 4
    checkpoint_every: int = 250
    log_every: int = 50
    convention: str = 'template-moving'
    similarity: Callable = mse
    sample_latent: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f'epochs must be >= 1, got {self.epochs}', field='epochs')
        if self.pairs_per_epoch < 1:
            raise ConfigError(f'pairs_per_epoch must be >= 1, got {self.pairs_per_epoch}',
                              field='pairs_per_epoch')

    @property
    def total_iterations(self) -> int:
        return self.epochs * self.pairs_per_epoch

    def schedule(self) -> ScheduleConfig:
        return ScheduleConfig(self.base_lr, self.min_lr,
                              self.schedule_period_epochs * self.pairs_per_epoch)

    @classmethod
    def from_config(cls, config, similarity: Callable = mse, **overrides) -> 'TrainConfig':
        values = dict(
            epochs=config['EPOCHS'], pairs_per_epoch=config['PAIRS_PER_EPOCH'],
            weights=LossWeights.from_config(config),
            integration=IntegrationConfig.from_config(config),
            base_lr=config['LEARNING_RATE'], min_lr=config['MIN_LEARNING_RATE'],
            schedule_period_epochs=config['SCHEDULE_PERIOD_EPOCHS'],
            checkpoint_every=config['CHECKPOINT_EVERY'], log_every=config['LOG_EVERY'],
            convention=config['FIELD_CONVENTION'], similarity=similarity,
        )
        values.update(overrides)
        return cls(**values)

    def describe(self) -> Dict:
        return {
            'epochs': self.epochs, 'pairs_per_epoch': self.pairs_per_epoch, 'seed': self.seed,
            'weights': self.weights.to_dict(), 'integration_steps': self.integration.steps,
            'integration_order': self.integration.order,
            'integration_midpoint': self.integration.midpoint,
            'base_lr': self.base_lr, 'min_lr': self.min_lr,
            'schedule_period_epochs': self.schedule_period_epochs,
            'convention': self.convention, 'sample_latent': self.sample_latent,
        }


@dataclass
class SiameseOutput:
    losses: LossBreakdown
    code: LatentCode
    template: Tensor
    reconstructions: Tensor


def siamese_forward(vae: VAEParams, reg: RegNetParams, image1: Tensor, image2: Tensor,
                    cfg: TrainConfig, rng: Optional[np.random.Generator] = None) -> SiameseOutput:
    """
    One siamese pass: both images share the encoder and decoder.

    z_bar = (z1 + z2) / 2 decodes to the pair's template; the frozen
    registration net relates the template to both images and all loss terms
    are evaluated. Sampling is skipped when ``rng`` is None.
    """
    pair = concat([image1, image2], axis=0)
    sample = cfg.sample_latent and rng is not None
    code = encode(pair, vae, rng, sample=sample)
    z1, z2 = code.z[0:1], code.z[1:2]
    z_bar = (z1 + z2) * 0.5
    decoded = decode(concat([code.z, z_bar], axis=0), vae)
    reconstructions, template = decoded[0:2], decoded[2:3]

    fields = register_to_template(template, pair, reg, cfg.integration, cfg.convention)
    displacement = fields.displacement
    parts = LossParts(
        sim=recon_loss(reconstructions[0:1], image1) + recon_loss(reconstructions[1:2], image2),
        kl=kl_loss(code.mu[0:1], code.log_var[0:1]) + kl_loss(code.mu[1:2], code.log_var[1:2]),
        even=even_loss(displacement.select(0), displacement.select(1)),
        temp=temp_loss(template, image1, image2, fields.forward.select(0),
                       fields.forward.select(1), cfg.similarity),
        warped=warped_loss(image1, image2, fields.inverse.select(0), fields.inverse.select(1),
                           cfg.similarity),
    )
    return SiameseOutput(total_loss(parts, cfg.weights), code, template, reconstructions)


@dataclass
class TrainResult:
    params: VAEParams
    history: List[Dict] = field(default_factory=list)
    metadata: Dict = field(default_factory=dict)


def train_siamese(group: SubjectGroup, vae: VAEParams, reg: RegNetParams, cfg: TrainConfig,
                  log_path: str = None, checkpoint_path: str = None,
                  reg_fingerprint: str = None) -> TrainResult:
    """
    Train the VAE in the siamese scheme through the frozen registration net.

    Args:
        group: Training subjects (at least two)
        vae: Initial VAE parameters, updated in place
        reg: Registration parameters; frozen and never modified
        cfg: Training settings
        log_path: Optional JSON-lines log {iter, lr, sim, kl, even, temp, warped, total}
        checkpoint_path: Checkpoint written every ``checkpoint_every`` iterations and at the end
        reg_fingerprint: Recorded in checkpoint metadata

    Returns:
        TrainResult

    Raises:
        NumericalError: If the loss becomes non-finite
    """
    reg.freeze()
    vae.encoder.unfreeze()
    vae.decoder.unfreeze()
    pairs = sample_pairs(len(group), cfg.seed)
    latent_rng = np.random.default_rng([cfg.seed, 1])
    schedule = cfg.schedule()
    state = AdamState(lr=cfg.base_lr)
    metadata = dict(cfg.describe(), registration=reg_fingerprint)
    history = []
    last_good = None
    total = cfg.total_iterations

    with _JsonLinesLog(log_path) as log:
        for it in range(total):
            lr = cosine_lr(it, schedule)
            i, j = next(pairs)
            try:
                with DiffGraph() as graph:
                    out = siamese_forward(vae, reg, group[i].as_tensor(), group[j].as_tensor(),
                                          cfg, latent_rng)
                if not out.losses.is_finite():
                    raise NumericalError(f'training loss diverged at iteration {it}',
                                         iteration=it)
            except NumericalError:
                _save_last_good(last_good, checkpoint_path, dict(metadata, iteration=it))
                raise

            last_good = vae.copy()
            vae.zero_grad()
            backward(out.losses.objective, graph)
            adam_step(vae.named_parameters(), state, lr)

            record = out.losses.to_record(iter=it, lr=lr)
            log.write(record)
            history.append(record)
            if cfg.log_every and (it % cfg.log_every == 0 or it == total - 1):
                logger.info(f'train iter {it}/{total}: total {out.losses.total:.6f} '
                            f'(sim {out.losses.sim:.5f}, even {out.losses.even:.5f})')
            if checkpoint_path and cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
                save_checkpoint(vae.to_checkpoint(dict(metadata, iteration=it + 1)),
                                checkpoint_path)

    metadata['iteration'] = total
    if checkpoint_path:
        save_checkpoint(vae.to_checkpoint(metadata), checkpoint_path)
    return TrainResult(vae, history, metadata)
