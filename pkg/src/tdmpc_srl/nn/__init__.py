"""Minimal float64 neural substrate: layer stacks, taped backprop, Adam."""

from .layers import (
    ACTIVATIONS,
    LayerSpec,
    activation,
    batch_norm,
    conv2d,
    conv_transpose2d,
    dense,
    fan_in,
    param_shapes,
    sigmoid_clamp,
)
from .network import Tape, backward, forward, init_params
from .optim import Adam, clip_global_norm
from .tensor import ParamSet, Tensor

__all__ = [
    "ACTIVATIONS", "Adam", "LayerSpec", "ParamSet", "Tape", "Tensor",
    "activation", "backward", "batch_norm", "clip_global_norm", "conv2d",
    "conv_transpose2d", "dense", "fan_in", "forward", "init_params",
    "param_shapes", "sigmoid_clamp",
]
