"""
Dense tensor engine with tape-based reverse-mode differentiation.

Tensors wrap contiguous float64 numpy arrays. Operations executed while a
``DiffGraph`` is active are recorded on its tape; ``backward`` replays the
tape in reverse and leaves dLoss/dLeaf in the ``grad`` of every leaf that
requires it::

    with DiffGraph() as graph:
        loss = (x * x).sum()
    backward(loss, graph)
"""
import logging
import threading
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from setgen.errors import NumericalError, ShapeError

logger = logging.getLogger(__name__)

DTYPE = np.float64

_local = threading.local()
_debug = {'enabled': False}


def set_debug(enabled: bool) -> None:
    """Enable or disable finite-value checks after every forward op."""
    _debug['enabled'] = bool(enabled)


def debug_enabled() -> bool:
    return _debug['enabled']


def _graph_stack() -> List['DiffGraph']:
    stack = getattr(_local, 'graphs', None)
    if stack is None:
        stack = _local.graphs = []
    return stack


def active_graph() -> Optional['DiffGraph']:
    """Return the innermost DiffGraph recording on this thread, if any."""
    stack = _graph_stack()
    return stack[-1] if stack else None


class Tensor:
    """
    An n-dimensional float64 array that can take part in a DiffGraph.

    Leaves created with ``requires_grad=True`` receive gradients; tensors
    produced by recorded ops require grad when any of their inputs does.
    """

    __array_priority__ = 100

    def __init__(self, data: Any, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=DTYPE, order='C')
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool) -> 'Tensor':
        out = cls.__new__(cls)
        out.data = np.asarray(data, dtype=DTYPE, order='C')
        out.requires_grad = requires_grad
        out.grad = None
        out.name = None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f'item() needs a single-element tensor, got shape {self.shape}',
                             dimension='size')
        return float(self.data.reshape(()))

    def detach(self) -> 'Tensor':
        return Tensor._wrap(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        label = f', name={self.name!r}' if self.name else ''
        return f'Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})'

    def __len__(self):
        return self.data.shape[0]

    # Arithmetic delegates to setgen.tensor.functional

    def __add__(self, other):
        from setgen.tensor import functional as F
        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from setgen.tensor import functional as F
        return F.sub(self, other)

    def __rsub__(self, other):
        from setgen.tensor import functional as F
        return F.sub(other, self)

    def __mul__(self, other):
        from setgen.tensor import functional as F
        return F.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from setgen.tensor import functional as F
        return F.div(self, other)

    def __rtruediv__(self, other):
        from setgen.tensor import functional as F
        return F.div(other, self)

    def __neg__(self):
        from setgen.tensor import functional as F
        return F.neg(self)

    def __pow__(self, exponent):
        from setgen.tensor import functional as F
        return F.power(self, exponent)

    def __getitem__(self, key):
        from setgen.tensor import functional as F
        return F.index(self, key)

    def sum(self, axis=None, keepdims=False):
        from setgen.tensor import functional as F
        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from setgen.tensor import functional as F
        return F.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from setgen.tensor import functional as F
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)


def as_tensor(value: Any) -> Tensor:
    """Wrap scalars and arrays as constant tensors; tensors pass through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=False)


class Function:
    """
    Base class for differentiable operations.

    Subclasses implement ``forward`` on numpy arrays and ``backward``, which
    maps dLoss/dOutput to one gradient (or None) per input.
    """

    def __init__(self, *inputs: Tensor):
        self.inputs = inputs
        self.needs_input_grad = tuple(t.requires_grad for t in inputs)

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError(f'{type(self).__name__} has no forward pass')

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        raise NotImplementedError(f'{type(self).__name__} has no backward pass')

    @classmethod
    def apply(cls, *inputs: Any, **kwargs: Any) -> Tensor:
        """
        Run the forward pass and record the op on the active graph.

        Args:
            *inputs: Input tensors (scalars/arrays are wrapped as constants)
            **kwargs: Op parameters passed to ``forward``

        Returns:
            Tensor: the op output
        """
        tensors = tuple(as_tensor(t) for t in inputs)
        func = cls(*tensors)
        out_data = func.forward(*(t.data for t in tensors), **kwargs)

        if _debug['enabled'] and not np.all(np.isfinite(out_data)):
            raise NumericalError(f'{cls.__name__} produced non-finite values',
                                 op=cls.__name__)

        graph = active_graph()
        requires_grad = graph is not None and any(func.needs_input_grad)
        out = Tensor._wrap(out_data, requires_grad=requires_grad)
        if requires_grad:
            graph.record(func, tensors, out)
        return out


@dataclass
class Node:
    """One executed op on the tape."""
    func: Function
    inputs: Tuple[Tensor, ...]
    output: Tensor


class DiffGraph:
    """
    Ordered tape of executed operations.

    A graph is confined to the thread that entered it. Ops are appended in
    execution order, so every op's inputs precede it.
    """

    def __init__(self):
        self.nodes: List[Node] = []

    def __enter__(self) -> 'DiffGraph':
        _graph_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _graph_stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, func: Function, inputs: Tuple[Tensor, ...], output: Tensor) -> None:
        self.nodes.append(Node(func, inputs, output))

    def reset(self) -> None:
        self.nodes.clear()


def backward(loss: Tensor, graph: DiffGraph) -> None:
    """
    Accumulate dLoss/dLeaf into every leaf tensor that requires grad.

    Args:
        loss: Scalar tensor recorded on ``graph``
        graph: The tape that recorded the forward pass

    Raises:
        ShapeError: If the loss is not a scalar
    """
    if loss.size != 1:
        raise ShapeError(f'backward needs a scalar loss, got shape {loss.shape}',
                         dimension='loss')
    if not loss.requires_grad:
        logger.debug('backward called on a loss that does not require grad')
        return

    produced = {id(node.output) for node in graph.nodes}
    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: Dict[int, Tensor] = {}
    if id(loss) not in produced:
        leaves[id(loss)] = loss

    for node in reversed(graph.nodes):
        grad = grads.pop(id(node.output), None)
        if grad is None:
            continue
        input_grads = node.func.backward(grad)
        for tensor, input_grad in zip(node.inputs, input_grads):
            if input_grad is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + input_grad
            else:
                grads[key] = input_grad
            if key not in produced:
                leaves[key] = tensor

    for key, tensor in leaves.items():
        grad = grads.get(key)
        if grad is None:
            continue
        grad = np.reshape(grad, tensor.shape)
        tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad
