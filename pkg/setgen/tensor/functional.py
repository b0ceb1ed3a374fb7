"""
Differentiable operations on Tensors.

Elementwise arithmetic, reductions, shape ops, activations, n-d
(transposed) convolution and multilinear grid sampling. Every op is a
``Function`` subclass; the lowercase wrappers are the public API.
"""
import itertools
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from setgen.errors import GeometryError, ShapeError
from setgen.tensor.engine import Function, Tensor


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum out broadcast dimensions so ``grad`` matches ``shape``."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# Elementwise arithmetic

class Add(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        return unbroadcast(grad, self.shapes[0]), unbroadcast(grad, self.shapes[1])


class Sub(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad):
        return unbroadcast(grad, self.shapes[0]), unbroadcast(-grad, self.shapes[1])


class Mul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        grad_a = unbroadcast(grad * self.b, self.a.shape) if self.needs_input_grad[0] else None
        grad_b = unbroadcast(grad * self.a, self.b.shape) if self.needs_input_grad[1] else None
        return grad_a, grad_b


class Div(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a / b

    def backward(self, grad):
        grad_a = unbroadcast(grad / self.b, self.a.shape) if self.needs_input_grad[0] else None
        grad_b = None
        if self.needs_input_grad[1]:
            grad_b = unbroadcast(-grad * self.a / (self.b * self.b), self.b.shape)
        return grad_a, grad_b


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class Power(Function):
    def forward(self, a, exponent):
        self.a, self.exponent = a, exponent
        return a ** exponent

    def backward(self, grad):
        return (grad * self.exponent * self.a ** (self.exponent - 1),)


class Exp(Function):
    def forward(self, a):
        self.out = np.exp(a)
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class Log(Function):
    def forward(self, a):
        self.a = a
        return np.log(a)

    def backward(self, grad):
        return (grad / self.a,)


class Sqrt(Function):
    def forward(self, a):
        self.out = np.sqrt(a)
        return self.out

    def backward(self, grad):
        return (grad * 0.5 / self.out,)


class LeakyReLU(Function):
    def forward(self, a, slope):
        self.positive = a > 0
        self.slope = slope
        return np.where(self.positive, a, slope * a)

    def backward(self, grad):
        return (np.where(self.positive, grad, self.slope * grad),)


class Sigmoid(Function):
    def forward(self, a):
        self.out = expit(a)
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


# Reductions and shape ops

def _normalize_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


class Sum(Function):
    def forward(self, a, axis=None, keepdims=False):
        self.shape = a.shape
        self.axes = _normalize_axes(axis, a.ndim)
        self.keepdims = keepdims
        return np.sum(a, axis=self.axes, keepdims=keepdims)

    def backward(self, grad):
        if not self.keepdims:
            grad = np.expand_dims(grad, self.axes)
        return (np.broadcast_to(grad, self.shape).copy(),)


class Mean(Function):
    def forward(self, a, axis=None, keepdims=False):
        self.shape = a.shape
        self.axes = _normalize_axes(axis, a.ndim)
        self.keepdims = keepdims
        self.count = int(np.prod([a.shape[ax] for ax in self.axes])) if self.axes else 1
        return np.mean(a, axis=self.axes, keepdims=keepdims)

    def backward(self, grad):
        if not self.keepdims:
            grad = np.expand_dims(grad, self.axes)
        return (np.broadcast_to(grad / self.count, self.shape).copy(),)


class Reshape(Function):
    def forward(self, a, shape):
        self.shape = a.shape
        return np.reshape(a, shape)

    def backward(self, grad):
        return (np.reshape(grad, self.shape),)


class Index(Function):
    """Basic (slice/int) indexing; the selected elements never repeat."""

    def forward(self, a, key):
        self.shape = a.shape
        self.key = key
        return np.array(a[key], copy=True)

    def backward(self, grad):
        full = np.zeros(self.shape, dtype=grad.dtype)
        full[self.key] += grad
        return (full,)


class Concat(Function):
    def forward(self, *arrays, axis=0):
        self.axis = axis
        self.sizes = [arr.shape[axis] for arr in arrays]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        bounds = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, bounds, axis=self.axis))


def add(a, b) -> Tensor:
    return Add.apply(a, b)


def sub(a, b) -> Tensor:
    return Sub.apply(a, b)


def mul(a, b) -> Tensor:
    return Mul.apply(a, b)


def div(a, b) -> Tensor:
    return Div.apply(a, b)


def neg(a) -> Tensor:
    return Neg.apply(a)


def power(a, exponent: float) -> Tensor:
    return Power.apply(a, exponent=float(exponent))


def square(a) -> Tensor:
    return Power.apply(a, exponent=2.0)


def exp(a) -> Tensor:
    return Exp.apply(a)


def log(a) -> Tensor:
    return Log.apply(a)


def sqrt(a) -> Tensor:
    return Sqrt.apply(a)


def sum(a, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    return Sum.apply(a, axis=axis, keepdims=keepdims)


def mean(a, axis=None, keepdims=False) -> Tensor:
    return Mean.apply(a, axis=axis, keepdims=keepdims)


def reshape(a, shape) -> Tensor:
    return Reshape.apply(a, shape=tuple(shape))


def index(a, key) -> Tensor:
    return Index.apply(a, key=key)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def leaky_relu(x, slope: float = 0.2) -> Tensor:
    """Elementwise max(x, slope * x) for slope in (0, 1)."""
    if not 0.0 < slope < 1.0:
        raise ValueError(f'LeakyReLU slope must lie in (0, 1), got {slope}')
    return LeakyReLU.apply(x, slope=float(slope))


def sigmoid(x) -> Tensor:
    """Elementwise 1 / (1 + exp(-x)), saturating without overflow."""
    return Sigmoid.apply(x)


def add_channel_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a per-channel bias of shape [C] to a [B, C, spatial...] tensor."""
    return add(x, reshape(bias, (1, -1) + (1,) * (x.ndim - 2)))


# Convolution

def _check_conv(x_shape, w_shape, stride, padding, transposed=False):
    if len(x_shape) != len(w_shape):
        raise ShapeError(f'input rank {len(x_shape)} does not match kernel rank {len(w_shape)}',
                         dimension='rank')
    if len(x_shape) < 3:
        raise ShapeError(f'expected [B, C, spatial...] input, got shape {tuple(x_shape)}',
                         dimension='rank')
    if stride not in (1, 2):
        raise ValueError(f'stride must be 1 or 2, got {stride}')
    if padding not in (0, 1):
        raise ValueError(f'padding must be 0 or 1, got {padding}')
    channel_axis = 0 if transposed else 1
    if x_shape[1] != w_shape[channel_axis]:
        raise ShapeError(
            f'input has {x_shape[1]} channels but kernel expects {w_shape[channel_axis]}',
            dimension='channels')
    if not transposed:
        for axis, (size, k) in enumerate(zip(x_shape[2:], w_shape[2:])):
            if size + 2 * padding < k:
                raise ShapeError(
                    f'spatial axis {axis} of size {size} is smaller than kernel size {k}',
                    dimension=f'spatial[{axis}]')


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    d = x.ndim - 2
    return np.pad(x, ((0, 0), (0, 0)) + ((padding, padding),) * d)


def _windows(xp: np.ndarray, kernel: Tuple[int, ...], stride: int) -> np.ndarray:
    """View of shape [B, C, out..., k...] over a padded input."""
    d = len(kernel)
    win = sliding_window_view(xp, kernel, axis=tuple(range(2, 2 + d)))
    if stride > 1:
        win = win[(slice(None), slice(None)) + (slice(None, None, stride),) * d]
    return win


def _conv_forward(x, w, stride, padding):
    d = w.ndim - 2
    win = _windows(_pad(x, padding), w.shape[2:], stride)
    out = np.tensordot(win, w, axes=([1] + list(range(2 + d, 2 + 2 * d)),
                                     [1] + list(range(2, 2 + d))))
    return np.ascontiguousarray(np.moveaxis(out, -1, 1))


def _conv_weight_grad(x, grad_out, kernel, stride, padding):
    d = len(kernel)
    win = _windows(_pad(x, padding), kernel, stride)
    axes = [0] + list(range(2, 2 + d))
    return np.tensordot(grad_out, win, axes=(axes, axes))


def _conv_input_grad(grad_out, w, stride, padding, in_spatial):
    """Vector-Jacobian product of the convolution with respect to its input."""
    d = w.ndim - 2
    kernel = w.shape[2:]
    out_spatial = grad_out.shape[2:]
    cols = np.tensordot(grad_out, w, axes=([1], [0]))  # [B, out..., C, k...]
    cols = np.moveaxis(cols, 1 + d, 1)  # [B, C, out..., k...]
    full = tuple(s + 2 * padding for s in in_spatial)
    xp = np.zeros(grad_out.shape[:1] + (w.shape[1],) + full, dtype=grad_out.dtype)
    for offset in np.ndindex(*kernel):
        target = tuple(slice(off, off + stride * (o - 1) + 1, stride)
                       for off, o in zip(offset, out_spatial))
        xp[(slice(None), slice(None)) + target] += cols[(Ellipsis,) + offset]
    crop = tuple(slice(padding, padding + s) for s in in_spatial)
    return np.ascontiguousarray(xp[(slice(None), slice(None)) + crop])


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def conv_transpose_output_size(size: int, kernel: int, stride: int, padding: int,
                               output_padding: Optional[int] = None) -> int:
    if output_padding is None:
        output_padding = stride - 1
    return (size - 1) * stride - 2 * padding + kernel + output_padding


class ConvNd(Function):
    def forward(self, x, w, stride=1, padding=0):
        _check_conv(x.shape, w.shape, stride, padding)
        self.x, self.w, self.stride, self.padding = x, w, stride, padding
        return _conv_forward(x, w, stride, padding)

    def backward(self, grad):
        grad_x = grad_w = None
        if self.needs_input_grad[0]:
            grad_x = _conv_input_grad(grad, self.w, self.stride, self.padding, self.x.shape[2:])
        if self.needs_input_grad[1]:
            grad_w = _conv_weight_grad(self.x, grad, self.w.shape[2:], self.stride, self.padding)
        return grad_x, grad_w


class ConvTransposeNd(Function):
    def forward(self, y, w, stride=1, padding=0, output_padding=None):
        _check_conv(y.shape, w.shape, stride, padding, transposed=True)
        if output_padding is None:
            output_padding = stride - 1
        out_spatial = tuple(
            conv_transpose_output_size(s, k, stride, padding, output_padding)
            for s, k in zip(y.shape[2:], w.shape[2:]))
        for axis, size in enumerate(out_spatial):
            if size < 1:
                raise ShapeError(f'transposed convolution collapses spatial axis {axis}',
                                 dimension=f'spatial[{axis}]')
        self.y, self.w, self.stride, self.padding = y, w, stride, padding
        return _conv_input_grad(y, w, stride, padding, out_spatial)

    def backward(self, grad):
        grad_y = grad_w = None
        if self.needs_input_grad[0]:
            grad_y = _conv_forward(grad, self.w, self.stride, self.padding)
        if self.needs_input_grad[1]:
            grad_w = _conv_weight_grad(grad, self.y, self.w.shape[2:], self.stride, self.padding)
        return grad_y, grad_w


def conv_nd(x, kernel, stride: int = 1, padding: int = 0) -> Tensor:
    """
    N-d cross-correlation with zero padding.

    Args:
        x: Input tensor [B, C, spatial...]
        kernel: Kernel tensor [F, C, k...]
        stride: 1 or 2
        padding: 0 or 1

    Returns:
        Tensor: [B, F, floor((S + 2p - k) / stride) + 1, ...]
    """
    return ConvNd.apply(x, kernel, stride=stride, padding=padding)


def conv_transpose_nd(x, kernel, stride: int = 1, padding: int = 0,
                      output_padding: Optional[int] = None) -> Tensor:
    """
    Transposed convolution, the input-gradient of ``conv_nd``.

    ``kernel`` uses the layout of the convolution it transposes, [F, C, k...],
    so the input has F channels and the output C. ``output_padding`` defaults
    to ``stride - 1`` which makes a stride-2 layer exactly double each axis.
    """
    return ConvTransposeNd.apply(x, kernel, stride=stride, padding=padding,
                                 output_padding=output_padding)


# Grid sampling

def _axis_taps(t: np.ndarray, low: np.ndarray, size: int, order: int):
    """(index, weight, d weight / d coordinate) per tap along one axis."""
    def at(offset):
        return np.clip(low + offset, 0, size - 1)

    if order == 1:
        return [(at(0), 1.0 - t, -np.ones_like(t)), (at(1), t, np.ones_like(t))]
    # Catmull-Rom cubic convolution
    t2, t3 = t * t, t * t * t
    return [
        (at(-1), 0.5 * (-t3 + 2.0 * t2 - t), 0.5 * (-3.0 * t2 + 4.0 * t - 1.0)),
        (at(0), 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0), 0.5 * (9.0 * t2 - 10.0 * t)),
        (at(1), 0.5 * (-3.0 * t3 + 4.0 * t2 + t), 0.5 * (-9.0 * t2 + 8.0 * t + 1.0)),
        (at(2), 0.5 * (t3 - t2), 0.5 * (3.0 * t2 - 2.0 * t)),
    ]


def _sample_plan(coords: np.ndarray, spatial: Tuple[int, ...], order: int = 1):
    """Per-axis taps and flattened corner indices/weights for border-clamped sampling."""
    d = len(spatial)
    batch = coords.shape[0]
    strides = [int(np.prod(spatial[axis + 1:])) for axis in range(d)]
    taps, inside = [], []
    for axis, size in enumerate(spatial):
        c = coords[:, axis].reshape(batch, -1)
        clamped = np.clip(c, 0.0, size - 1)
        low = np.minimum(np.floor(clamped), max(size - 2, 0)).astype(np.intp)
        taps.append(_axis_taps(clamped - low, low, size, order))
        inside.append((c > 0.0) & (c < size - 1))
    corners = []
    for picks in itertools.product(*(range(len(axis_taps)) for axis_taps in taps)):
        flat = np.zeros(taps[0][0][0].shape, dtype=np.intp)
        weight = np.ones_like(taps[0][0][1])
        for axis, pick in enumerate(picks):
            index, w, _ = taps[axis][pick]
            flat = flat + index * strides[axis]
            weight = weight * w
        corners.append((picks, flat, weight))
    return corners, taps, inside


class GridSample(Function):
    def forward(self, image, coords, order=1):
        if order not in (1, 3):
            raise ShapeError(f'interpolation order must be 1 or 3, got {order}',
                             dimension='order')
        spatial = image.shape[2:]
        d = len(spatial)
        if coords.shape != (image.shape[0], d) + spatial:
            raise GeometryError(
                f'sampling map of shape {coords.shape} does not match image of shape '
                f'{image.shape}; expected {(image.shape[0], d) + spatial}',
                dimension='map')
        batch, channels = image.shape[:2]
        flat_image = image.reshape(batch, channels, -1)
        corners, taps, inside = _sample_plan(coords, spatial, order)
        out = np.zeros(flat_image.shape, dtype=image.dtype)
        for _, flat, weight in corners:
            out = out + weight[:, None, :] * np.take_along_axis(flat_image, flat[:, None, :],
                                                                axis=2)
        self.shape = image.shape
        self.flat_image = flat_image
        self.corners, self.taps, self.inside = corners, taps, inside
        return out.reshape(image.shape)

    def backward(self, grad):
        batch, channels = self.shape[:2]
        spatial = self.shape[2:]
        d = len(spatial)
        n = int(np.prod(spatial))
        flat_grad = grad.reshape(batch, channels, n)
        grad_image = grad_coords = None

        if self.needs_input_grad[0]:
            base = (np.arange(batch)[:, None] * channels + np.arange(channels)[None, :]) * n
            indices = np.concatenate([
                (base[:, :, None] + flat[:, None, :]).ravel() for _, flat, _ in self.corners])
            weights = np.concatenate([
                (flat_grad * weight[:, None, :]).ravel() for _, _, weight in self.corners])
            grad_image = np.bincount(indices, weights=weights,
                                     minlength=batch * channels * n).reshape(self.shape)

        if self.needs_input_grad[1]:
            grad_coords = np.zeros((batch, d, n), dtype=grad.dtype)
            for picks, flat, _ in self.corners:
                vals = np.take_along_axis(self.flat_image, flat[:, None, :], axis=2)
                projected = np.sum(flat_grad * vals, axis=1)
                for axis in range(d):
                    partial = projected * self.taps[axis][picks[axis]][2]
                    for other, pick in enumerate(picks):
                        if other != axis:
                            partial = partial * self.taps[other][pick][1]
                    grad_coords[:, axis] += partial
            for axis in range(d):
                grad_coords[:, axis] *= self.inside[axis]
            grad_coords = grad_coords.reshape((batch, d) + spatial)

        return grad_image, grad_coords


def grid_sample(image, coords, order: int = 1) -> Tensor:
    """
    Interpolate ``image`` at absolute voxel coordinates.

    Args:
        image: Tensor [B, C, spatial...]
        coords: Tensor [B, d, spatial...]; channel i is the coordinate along
            spatial axis i. Out-of-range coordinates clamp to the border.
        order: 1 for multilinear, 3 for Catmull-Rom cubic convolution
            (edge samples replicated)

    Returns:
        Tensor: [B, C, spatial...]
    """
    return GridSample.apply(image, coords, order=order)
