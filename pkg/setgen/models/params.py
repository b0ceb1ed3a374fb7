"""
Named parameter sets and deterministic initialization.
"""
import logging
from collections import OrderedDict
from functools import singledispatch
from typing import Dict, Iterator, Mapping, Tuple

import numpy as np

from setgen.errors import CheckpointError
from setgen.tensor import Tensor

logger = logging.getLogger(__name__)


class ParamSet:
    """Ordered mapping of parameter name to trainable Tensor."""

    def __init__(self, tensors: Mapping[str, Tensor] = None):
        self._tensors: 'OrderedDict[str, Tensor]' = OrderedDict()
        for name, tensor in (tensors or {}).items():
            self[name] = tensor

    def __setitem__(self, name: str, value) -> None:
        if not isinstance(value, Tensor):
            value = Tensor(value, requires_grad=True, name=name)
        value.name = name
        self._tensors[name] = value

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def tensors(self):
        return list(self._tensors.values())

    def num_elements(self) -> int:
        return int(sum(t.size for t in self._tensors.values()))

    def freeze(self) -> None:
        """Stop gradients from being recorded for every parameter."""
        for tensor in self._tensors.values():
            tensor.requires_grad = False
            tensor.grad = None

    def unfreeze(self) -> None:
        for tensor in self._tensors.values():
            tensor.requires_grad = True

    @property
    def frozen(self) -> bool:
        return not any(t.requires_grad for t in self._tensors.values())

    def zero_grad(self) -> None:
        for tensor in self._tensors.values():
            tensor.grad = None

    def arrays(self, prefix: str = '') -> Dict[str, np.ndarray]:
        return OrderedDict((prefix + name, t.data) for name, t in self._tensors.items())

    def copy(self) -> 'ParamSet':
        clone = type(self)()
        for name, tensor in self._tensors.items():
            clone[name] = Tensor(tensor.data.copy(), requires_grad=tensor.requires_grad)
        return clone

    def named_parameters(self) -> 'OrderedDict[str, Tensor]':
        return OrderedDict(self._tensors)

    def load_arrays(self, arrays: Mapping[str, np.ndarray], prefix: str = '') -> None:
        """Overwrite values from ``arrays`` (keys carry ``prefix``), checking shapes."""
        for name, tensor in self._tensors.items():
            key = prefix + name
            if key not in arrays:
                raise CheckpointError(f'checkpoint is missing tensor {key!r}', tensor=key)
            value = np.asarray(arrays[key], dtype=np.float64)
            if value.shape != tensor.shape:
                raise CheckpointError(
                    f'tensor {key!r} has shape {value.shape}, architecture expects {tensor.shape}',
                    tensor=key)
            tensor.data = np.ascontiguousarray(value.copy())

    def grad_norm(self) -> float:
        total = 0.0
        for tensor in self._tensors.values():
            if tensor.grad is not None:
                total += float(np.sum(tensor.grad * tensor.grad))
        return float(np.sqrt(total))


def kernel_shape(out_channels: int, in_channels: int, ndim: int, k: int = 3) -> Tuple[int, ...]:
    return (out_channels, in_channels) + (k,) * ndim


def fan_in_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) samples."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@singledispatch
def init_params(arch, seed: int = 0):
    """
    Initialize parameters for an architecture, deterministically per seed.

    Args:
        arch: A VAEArch or RegNetArch
        seed: Integer seed

    Returns:
        The matching parameter container
    """
    raise TypeError(f'no initializer registered for {type(arch).__name__}')
