"""
Optimizer service: Adam and the cosine warm-restart learning-rate schedule.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from setgen.errors import ConfigError
from setgen.tensor import Tensor


@dataclass
class AdamState:
    """First/second moments keyed by parameter name plus the step count."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class ScheduleConfig:
    base_lr: float = 1e-4
    min_lr: float = 0.0
    period: int = 1

    def __post_init__(self):
        if not 0.0 <= self.min_lr <= self.base_lr:
            raise ConfigError(f'need 0 <= min_lr <= base_lr, got {self.min_lr}, {self.base_lr}',
                              field='min_lr')
        if int(self.period) < 1:
            raise ConfigError(f'schedule period must be >= 1, got {self.period}', field='period')


def adam_step(params: Mapping[str, Tensor], state: AdamState, lr: float = None) -> None:
    """
    One bias-corrected Adam update, in place.

    Parameters without a gradient or with ``requires_grad`` False are skipped.
    Moments are keyed by parameter name.

    Args:
        params: Name -> trainable tensor holding ``grad``
        state: Moments and step count, updated in place
        lr: Learning rate for this step (defaults to ``state.lr``)
    """
    lr = state.lr if lr is None else lr
    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    for key, param in params.items():
        if not param.requires_grad or param.grad is None:
            continue
        grad = param.grad
        m = state.m.get(key)
        v = state.v.get(key)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.m[key] = m
        state.v[key] = v
        m_hat = m / correction1
        v_hat = v / correction2
        param.data = param.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)


def cosine_lr(step: int, cfg: ScheduleConfig) -> float:
    """lr = min + (base - min) * (1 + cos(pi * (step mod T) / T)) / 2."""
    phase = (int(step) % cfg.period) / cfg.period
    return cfg.min_lr + 0.5 * (cfg.base_lr - cfg.min_lr) * (1.0 + math.cos(math.pi * phase))
