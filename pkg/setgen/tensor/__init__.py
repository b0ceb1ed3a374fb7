"""
Tensor engine: float64 tensors with tape-based reverse-mode differentiation.
"""
from setgen.tensor.engine import (
    DTYPE,
    DiffGraph,
    Function,
    Tensor,
    active_graph,
    as_tensor,
    backward,
    debug_enabled,
    set_debug,
)
from setgen.tensor.functional import (
    add_channel_bias,
    concat,
    conv_nd,
    conv_output_size,
    conv_transpose_nd,
    conv_transpose_output_size,
    exp,
    grid_sample,
    leaky_relu,
    log,
    mean,
    sigmoid,
    sqrt,
    square,
)

__all__ = [
    'DTYPE', 'DiffGraph', 'Function', 'Tensor', 'active_graph', 'as_tensor',
    'backward', 'debug_enabled', 'set_debug',
    'add_channel_bias', 'concat', 'conv_nd', 'conv_output_size', 'conv_transpose_nd',
    'conv_transpose_output_size', 'exp', 'grid_sample', 'leaky_relu', 'log', 'mean',
    'sigmoid', 'sqrt', 'square',
]
