"""Stack-level forward/backward over LayerSpec lists, with single-use tapes."""

from __future__ import annotations

import numpy as np

from . import layers as L
from .tensor import ParamSet, Tensor

_FORWARD = {
    "dense": L.dense_forward,
    "conv2d": L.conv2d_forward,
    "conv_transpose2d": L.conv_transpose2d_forward,
    "activation": L.activation_forward,
}

_BACKWARD = {
    "dense": L.dense_backward,
    "conv2d": L.conv2d_backward,
    "conv_transpose2d": L.conv_transpose2d_backward,
    "batch_norm": L.batch_norm_backward,
    "activation": L.activation_backward,
}


def init_params(specs, rng: np.random.Generator) -> ParamSet:
    """Fresh parameters: uniform +-sqrt(1/fan_in) weights, zero biases,
    batch-norm at identity (gamma 1, beta 0, running stats 0/1)."""
    params = ParamSet()
    for spec in specs:
        shapes = L.param_shapes(spec)
        if not shapes:
            continue
        if spec.kind == "batch_norm":
            params.add(f"{spec.name}.gamma", Tensor(np.ones(spec.dim)))
            params.add(f"{spec.name}.beta", Tensor(np.zeros(spec.dim)))
            params.add(f"{spec.name}.rmean", Tensor(np.zeros(spec.dim)))
            params.add(f"{spec.name}.rvar", Tensor(np.ones(spec.dim)))
            continue
        bound = float(np.sqrt(1.0 / L.fan_in(spec)))
        for field, shape in shapes.items():
            if field == "b":
                params.add(f"{spec.name}.{field}", Tensor.zeros(shape))
            else:
                params.add(f"{spec.name}.{field}",
                           Tensor(rng.uniform(-bound, bound, size=shape)))
    return params


def _expected_ndim(specs) -> int:
    for spec in specs:
        if spec.kind == "dense":
            return 2
        if spec.kind in ("conv2d", "conv_transpose2d"):
            return 4
        if spec.kind == "batch_norm":
            continue
        if spec.kind == "activation":
            continue
    return 2


def _check_input(spec, x):
    """Structured shape errors naming the layer and both shapes."""
    if spec.kind == "dense":
        want = (spec.in_dim,)
        got = x.shape[-1:]
    elif spec.kind in ("conv2d", "conv_transpose2d"):
        want = (spec.in_ch, spec.in_size, spec.in_size)
        got = x.shape[-3:]
    elif spec.kind == "batch_norm":
        want = (spec.dim,)
        got = x.shape[1:2]
    else:
        return
    if tuple(got) != want:
        raise ValueError(f"layer {spec.name!r} ({spec.kind}) expects input "
                         f"trailing shape {want}, got {tuple(x.shape)}")


class Tape:
    """Per-layer caches from one forward pass. Single use: backward() consumes it."""

    __slots__ = ("specs", "params", "caches", "squeezed", "used")

    def __init__(self, specs, params, caches, squeezed):
        self.specs = specs
        self.params = params
        self.caches = caches
        self.squeezed = squeezed
        self.used = False


def forward(specs, params: ParamSet, x, mode: str = "train"):
    """Run the stack; returns (y, tape).

    mode selects batch-norm statistics ("train" updates running stats, "eval"
    reads them). A single unbatched sample is accepted and the output is
    unbatched to match.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    squeezed = False
    if x.ndim == _expected_ndim(specs) - 1:
        x = x[None]
        squeezed = True
    caches = []
    for spec in specs:
        _check_input(spec, x)
        if spec.kind == "batch_norm":
            x, cache = L.batch_norm_forward(spec, params, x, mode)
        else:
            x, cache = _FORWARD[spec.kind](spec, params, x)
        caches.append(cache)
    if squeezed:
        x = x[0]
    return x, Tape(specs, params, caches, squeezed)


def backward(tape: Tape, gy, into: ParamSet | None = None, param_grads: bool = True):
    """Backpropagate gy through the taped pass; returns the input gradient.

    Parameter gradients are accumulated additively into ``into`` (a ParamSet
    of gradient buffers keyed like the forward parameters' trainable entries).
    Pass param_grads=False to get only the input gradient. The tape is
    consumed: a second call raises.
    """
    if tape.used:
        raise RuntimeError("tape already consumed by a previous backward()")
    tape.used = True
    if param_grads and into is None:
        raise ValueError("param_grads=True requires a gradient ParamSet")
    gy = np.asarray(gy, dtype=np.float64)
    if tape.squeezed:
        gy = gy[None]
    for spec, cache in zip(reversed(tape.specs), reversed(tape.caches)):
        gy, grads = _BACKWARD[spec.kind](spec, tape.params, cache, gy,
                                         param_grads=param_grads)
        if param_grads:
            for field, g in grads.items():
                into[f"{spec.name}.{field}"].array += g
    if tape.squeezed:
        gy = gy[0]
    return gy
