"""
U-shaped registration network predicting a stationary velocity field.

Input is the channel concatenation (moving, fixed). Level 0 keeps full
resolution; each further level halves it with a stride-2 convolution. The
decoder upsamples with stride-2 transposed convolutions, concatenates the
skip connection of the same level and refines with a 3x3 convolution. The
final velocity convolution starts near zero so the untrained net predicts
an almost-identity deformation.
"""
import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from setgen.errors import CheckpointError, ConfigError, GeometryError
from setgen.models.checkpoint import ModelCheckpoint
from setgen.models.geometry import VelocityField, VolumeGeometry
from setgen.models.params import ParamSet, fan_in_uniform, init_params, kernel_shape
from setgen.tensor import (Tensor, add_channel_bias, concat, conv_nd, conv_transpose_nd,
                           leaky_relu)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RegNetArch:
    input_shape: Tuple[int, ...] = (64, 64)
    levels: int = 4
    base_filters: int = 16
    slope: float = 0.2
    final_init_scale: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, 'input_shape', tuple(int(s) for s in self.input_shape))
        if len(self.input_shape) not in (2, 3):
            raise ConfigError(f'registration input must be 2-D or 3-D, got {self.input_shape}',
                              field='input_shape')
        if not 2 <= self.levels <= 6:
            raise ConfigError(f'levels must lie in [2, 6], got {self.levels}', field='levels')
        if self.base_filters < 1:
            raise ConfigError(f'base_filters must be positive, got {self.base_filters}',
                              field='base_filters')
        factor = 2 ** (self.levels - 1)
        for axis, size in enumerate(self.input_shape):
            if size % factor:
                raise ConfigError(
                    f'input axis {axis} ({size}) is not divisible by 2^{self.levels - 1}',
                    field='input_shape')

    @property
    def ndim(self) -> int:
        return len(self.input_shape)

    def widths(self) -> List[int]:
        """Encoder widths per level: base, then 2 * base."""
        return [self.base_filters] + [2 * self.base_filters] * (self.levels - 1)

    def to_dict(self):
        return {
            'input_shape': list(self.input_shape),
            'levels': self.levels,
            'base_filters': self.base_filters,
            'slope': self.slope,
            'final_init_scale': self.final_init_scale,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(input_shape=tuple(data['input_shape']), levels=data['levels'],
                   base_filters=data['base_filters'], slope=data['slope'],
                   final_init_scale=data['final_init_scale'])

    @classmethod
    def from_config(cls, config, input_shape):
        return cls(input_shape=tuple(input_shape), levels=config['REG_LEVELS'],
                   base_filters=config['REG_BASE_FILTERS'], slope=config['LEAKY_SLOPE'],
                   final_init_scale=config['REG_FINAL_INIT_SCALE'])


class RegNetParams(ParamSet):
    """Registration parameters; ``arch`` is attached by ``init_params``."""

    arch: RegNetArch = None

    def copy(self) -> 'RegNetParams':
        clone = super().copy()
        clone.arch = self.arch
        return clone

    def to_checkpoint(self, metadata=None) -> ModelCheckpoint:
        return ModelCheckpoint(kind='regnet', arch=self.arch.to_dict(), tensors=self.arrays(),
                               metadata=dict(metadata or {}))

    @classmethod
    def from_checkpoint(cls, checkpoint: ModelCheckpoint) -> 'RegNetParams':
        checkpoint.require_kind('regnet')
        params = init_params(RegNetArch.from_dict(checkpoint.arch), 0)
        params.load_arrays(checkpoint.tensors)
        extra = set(checkpoint.tensors) - set(params)
        if extra:
            raise CheckpointError(f'checkpoint has unexpected tensors: {sorted(extra)}')
        return params


@init_params.register
def _init_regnet(arch: RegNetArch, seed: int = 0) -> RegNetParams:
    rng = np.random.default_rng(seed)
    d = arch.ndim
    widths = arch.widths()
    params = RegNetParams()
    params.arch = arch

    channels = 2
    for level, width in enumerate(widths):
        fan_in = channels * 3 ** d
        params[f'down{level}.weight'] = fan_in_uniform(rng, kernel_shape(width, channels, d), fan_in)
        params[f'down{level}.bias'] = fan_in_uniform(rng, (width,), fan_in)
        channels = width

    for level in range(arch.levels - 1, 0, -1):
        up_width = 2 * arch.base_filters
        fan_in = channels * 3 ** d
        params[f'up{level}.weight'] = fan_in_uniform(rng, kernel_shape(channels, up_width, d), fan_in)
        params[f'up{level}.bias'] = fan_in_uniform(rng, (up_width,), fan_in)
        merged = up_width + widths[level - 1]
        fan_in = merged * 3 ** d
        params[f'merge{level}.weight'] = fan_in_uniform(rng, kernel_shape(up_width, merged, d), fan_in)
        params[f'merge{level}.bias'] = fan_in_uniform(rng, (up_width,), fan_in)
        channels = up_width

    params['velocity.weight'] = rng.normal(0.0, arch.final_init_scale,
                                           size=kernel_shape(d, channels, d))
    params['velocity.bias'] = np.zeros(d)
    return params


def predict_velocity(moving: Tensor, fixed: Tensor, params: RegNetParams) -> VelocityField:
    """
    Predict the stationary velocity registering ``moving`` onto ``fixed``.

    Args:
        moving: Intensities [B, 1, spatial...]
        fixed: Intensities [B, 1, spatial...]
        params: Registration parameters

    Returns:
        VelocityField: [B, d, spatial...]

    Raises:
        GeometryError: If the images differ in shape or do not match the net
    """
    arch = params.arch
    if moving.shape != fixed.shape:
        raise GeometryError(f'moving {moving.shape} and fixed {fixed.shape} differ',
                            dimension='spatial')
    if moving.ndim != arch.ndim + 2 or moving.shape[2:] != arch.input_shape:
        raise GeometryError(
            f'images {moving.shape} do not match the registration input {arch.input_shape}',
            dimension='spatial')

    h = concat([moving, fixed], axis=1)
    skips = []
    for level in range(arch.levels):
        stride = 1 if level == 0 else 2
        h = conv_nd(h, params[f'down{level}.weight'], stride=stride, padding=1)
        h = leaky_relu(add_channel_bias(h, params[f'down{level}.bias']), arch.slope)
        skips.append(h)

    for level in range(arch.levels - 1, 0, -1):
        h = conv_transpose_nd(h, params[f'up{level}.weight'], stride=2, padding=1)
        h = leaky_relu(add_channel_bias(h, params[f'up{level}.bias']), arch.slope)
        h = concat([h, skips[level - 1]], axis=1)
        h = conv_nd(h, params[f'merge{level}.weight'], stride=1, padding=1)
        h = leaky_relu(add_channel_bias(h, params[f'merge{level}.bias']), arch.slope)

    v = conv_nd(h, params['velocity.weight'], stride=1, padding=1)
    v = add_channel_bias(v, params['velocity.bias'])
    return VelocityField(v, VolumeGeometry(arch.input_shape))
