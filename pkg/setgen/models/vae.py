"""
Convolutional VAE with a spatial latent code.

The encoder stacks stride-2 3x3 convolutions; its last layer's channels are
split into mu and log-variance halves. The decoder mirrors it with stride-2
transposed convolutions and ends in a sigmoid-activated 3x3 convolution.
There is no fully-connected layer.
"""
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from setgen.errors import CheckpointError, ConfigError, ShapeError
from setgen.models.checkpoint import ModelCheckpoint
from setgen.models.params import ParamSet, fan_in_uniform, init_params, kernel_shape
from setgen.tensor import (Tensor, add_channel_bias, conv_nd, conv_transpose_nd, exp,
                           leaky_relu, sigmoid)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VAEArch:
    """VAE shape settings."""

    input_shape: Tuple[int, ...] = (64, 64)
    in_channels: int = 1
    encoder_widths: Tuple[int, ...] = (32, 32, 32, 64)
    decoder_widths: Tuple[int, ...] = (32, 32, 32, 32)
    slope: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, 'input_shape', tuple(int(s) for s in self.input_shape))
        object.__setattr__(self, 'encoder_widths', tuple(int(w) for w in self.encoder_widths))
        object.__setattr__(self, 'decoder_widths', tuple(int(w) for w in self.decoder_widths))
        if len(self.input_shape) not in (2, 3):
            raise ConfigError(f'VAE input must be 2-D or 3-D, got {self.input_shape}',
                              field='input_shape')
        if not self.encoder_widths:
            raise ConfigError('encoder needs at least one layer', field='encoder_widths')
        if len(self.decoder_widths) != len(self.encoder_widths):
            raise ConfigError(
                f'decoder has {len(self.decoder_widths)} layers, encoder has '
                f'{len(self.encoder_widths)}', field='decoder_widths')
        if self.encoder_widths[-1] % 2:
            raise ConfigError(f'final encoder width {self.encoder_widths[-1]} must be even',
                              field='encoder_widths')
        factor = 2 ** self.depth
        for axis, size in enumerate(self.input_shape):
            if size % factor:
                raise ConfigError(
                    f'input axis {axis} ({size}) is not divisible by 2^{self.depth}',
                    field='input_shape')

    @property
    def ndim(self) -> int:
        return len(self.input_shape)

    @property
    def depth(self) -> int:
        return len(self.encoder_widths)

    @property
    def latent_channels(self) -> int:
        return self.encoder_widths[-1] // 2

    @property
    def latent_shape(self) -> Tuple[int, ...]:
        factor = 2 ** self.depth
        return (self.latent_channels,) + tuple(s // factor for s in self.input_shape)

    def to_dict(self):
        return {
            'input_shape': list(self.input_shape),
            'in_channels': self.in_channels,
            'encoder_widths': list(self.encoder_widths),
            'decoder_widths': list(self.decoder_widths),
            'slope': self.slope,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(input_shape=tuple(data['input_shape']), in_channels=data['in_channels'],
                   encoder_widths=tuple(data['encoder_widths']),
                   decoder_widths=tuple(data['decoder_widths']), slope=data['slope'])

    @classmethod
    def from_config(cls, config, input_shape):
        return cls(input_shape=tuple(input_shape),
                   encoder_widths=tuple(config['VAE_ENCODER_WIDTHS']),
                   decoder_widths=tuple(config['VAE_DECODER_WIDTHS']),
                   slope=config['LEAKY_SLOPE'])


class EncoderParams(ParamSet):
    """Kernels ``layer{i}.weight`` [w_i, w_{i-1}, 3...] and biases ``layer{i}.bias``."""


class DecoderParams(ParamSet):
    """Transposed-conv ``layer{i}`` kernels plus the final ``out`` convolution."""


@dataclass
class VAEParams:
    arch: VAEArch
    encoder: EncoderParams
    decoder: DecoderParams

    def param_sets(self):
        return (self.encoder, self.decoder)

    def tensors(self):
        return self.encoder.tensors() + self.decoder.tensors()

    def named_parameters(self):
        named = OrderedDict(('encoder.' + n, t) for n, t in self.encoder.items())
        named.update(('decoder.' + n, t) for n, t in self.decoder.items())
        return named

    def zero_grad(self):
        self.encoder.zero_grad()
        self.decoder.zero_grad()

    def copy(self) -> 'VAEParams':
        return VAEParams(self.arch, self.encoder.copy(), self.decoder.copy())

    def to_checkpoint(self, metadata=None) -> ModelCheckpoint:
        tensors = self.encoder.arrays('encoder.')
        tensors.update(self.decoder.arrays('decoder.'))
        return ModelCheckpoint(kind='vae', arch=self.arch.to_dict(), tensors=tensors,
                               metadata=dict(metadata or {}))

    @classmethod
    def from_checkpoint(cls, checkpoint: ModelCheckpoint) -> 'VAEParams':
        checkpoint.require_kind('vae')
        params = init_params(VAEArch.from_dict(checkpoint.arch), 0)
        params.encoder.load_arrays(checkpoint.tensors, 'encoder.')
        params.decoder.load_arrays(checkpoint.tensors, 'decoder.')
        extra = set(checkpoint.tensors) - {'encoder.' + n for n in params.encoder} \
            - {'decoder.' + n for n in params.decoder}
        if extra:
            raise CheckpointError(f'checkpoint has unexpected tensors: {sorted(extra)}')
        return params


@dataclass
class LatentCode:
    """Posterior parameters and the latent actually used."""

    mu: Tensor
    log_var: Tensor
    z: Tensor = field(default=None)

    def __post_init__(self):
        if self.z is None:
            self.z = self.mu
        if not (self.mu.shape == self.log_var.shape == self.z.shape):
            raise ShapeError(
                f'latent shapes differ: mu {self.mu.shape}, log_var {self.log_var.shape}, '
                f'z {self.z.shape}', dimension='latent')


@init_params.register
def _init_vae(arch: VAEArch, seed: int = 0) -> VAEParams:
    rng = np.random.default_rng(seed)
    d = arch.ndim
    encoder = EncoderParams()
    channels = arch.in_channels
    for i, width in enumerate(arch.encoder_widths):
        fan_in = channels * 3 ** d
        encoder[f'layer{i}.weight'] = fan_in_uniform(rng, kernel_shape(width, channels, d), fan_in)
        encoder[f'layer{i}.bias'] = fan_in_uniform(rng, (width,), fan_in)
        channels = width

    decoder = DecoderParams()
    channels = arch.latent_channels
    for i, width in enumerate(arch.decoder_widths):
        fan_in = channels * 3 ** d
        # transposed kernels keep the [in, out, k...] layout of the conv they transpose
        decoder[f'layer{i}.weight'] = fan_in_uniform(rng, kernel_shape(channels, width, d), fan_in)
        decoder[f'layer{i}.bias'] = fan_in_uniform(rng, (width,), fan_in)
        channels = width
    fan_in = channels * 3 ** d
    decoder['out.weight'] = fan_in_uniform(rng, kernel_shape(arch.in_channels, channels, d), fan_in)
    decoder['out.bias'] = fan_in_uniform(rng, (arch.in_channels,), fan_in)
    return VAEParams(arch, encoder, decoder)


def _check_input(x: Tensor, arch: VAEArch) -> None:
    expected = (arch.in_channels,) + arch.input_shape
    if x.ndim != arch.ndim + 2 or x.shape[1:] != expected:
        raise ShapeError(f'VAE input {x.shape} does not match [B, {expected}]',
                         dimension='spatial' if x.ndim == arch.ndim + 2 else 'rank')


def encode(x: Tensor, params: VAEParams, rng: Optional[np.random.Generator] = None,
           sample: bool = False) -> LatentCode:
    """
    Encode intensities to a latent code.

    Args:
        x: Intensities [B, 1, spatial...] in [0, 1]
        params: VAE parameters
        rng: Generator for the reparameterization noise (required when sampling)
        sample: Draw z = mu + exp(log_var / 2) * eps instead of returning mu

    Returns:
        LatentCode
    """
    arch = params.arch
    _check_input(x, arch)
    h = x
    for i in range(arch.depth):
        h = conv_nd(h, params.encoder[f'layer{i}.weight'], stride=2, padding=1)
        h = add_channel_bias(h, params.encoder[f'layer{i}.bias'])
        if i < arch.depth - 1:
            h = leaky_relu(h, arch.slope)
    half = arch.latent_channels
    mu = h[:, :half]
    log_var = h[:, half:]
    if not sample:
        return LatentCode(mu, log_var, mu)
    if rng is None:
        raise ValueError('sampling a latent code needs a random generator')
    eps = rng.standard_normal(mu.shape)
    z = mu + exp(log_var * 0.5) * eps
    return LatentCode(mu, log_var, z)


def decode(z: Tensor, params: VAEParams) -> Tensor:
    """
    Decode latent codes to intensities in (0, 1).

    Args:
        z: Latent tensor [B, C_z, latent spatial...]

    Returns:
        Tensor: [B, 1, input spatial...]
    """
    arch = params.arch
    if z.ndim != arch.ndim + 2 or z.shape[1:] != arch.latent_shape:
        raise ShapeError(f'latent {z.shape} does not match [B, {arch.latent_shape}]',
                         dimension='latent')
    h = z
    for i in range(arch.depth):
        h = conv_transpose_nd(h, params.decoder[f'layer{i}.weight'], stride=2, padding=1)
        h = add_channel_bias(h, params.decoder[f'layer{i}.bias'])
        h = leaky_relu(h, arch.slope)
    h = conv_nd(h, params.decoder['out.weight'], stride=1, padding=1)
    h = add_channel_bias(h, params.decoder['out.bias'])
    return sigmoid(h)
