"""Layer specifications and the per-layer forward/backward arithmetic.

A network is a plain list of LayerSpec values; parameters live in a ParamSet
keyed by ``{layer.name}.{field}``. All convolutions are lowered to GEMM via
im2col / col2im so a single BLAS call carries the hot path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("elu", "relu", "sigmoid", "tanh", "identity")

BN_EPS = 1e-8  # float64 affords a tight epsilon; keeps normalized variance at 1


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a feed-forward stack.

    kind is one of dense / conv2d / conv_transpose2d / batch_norm / activation.
    Spatial layers carry their input geometry so every shape in the stack is
    known statically.
    """

    kind: str
    name: str
    extra: dict = field(default_factory=dict)

    def __getattr__(self, key):
        try:
            return self.extra[key]
        except KeyError:
            raise AttributeError(key) from None


def dense(name: str, in_dim: int, out_dim: int) -> LayerSpec:
    return LayerSpec("dense", name, {"in_dim": in_dim, "out_dim": out_dim})


def conv2d(name: str, in_ch: int, out_ch: int, in_size: int, kernel: int,
           stride: int = 1, pad: int = 0) -> LayerSpec:
    out_size = (in_size + 2 * pad - kernel) // stride + 1
    if out_size < 1:
        raise ValueError(f"conv2d {name!r}: non-positive output size {out_size}")
    return LayerSpec("conv2d", name, {
        "in_ch": in_ch, "out_ch": out_ch, "in_size": in_size,
        "kernel": kernel, "stride": stride, "pad": pad, "out_size": out_size,
    })


def conv_transpose2d(name: str, in_ch: int, out_ch: int, in_size: int, kernel: int,
                     stride: int = 1, pad: int = 0) -> LayerSpec:
    out_size = (in_size - 1) * stride - 2 * pad + kernel
    if out_size < 1:
        raise ValueError(f"conv_transpose2d {name!r}: non-positive output size {out_size}")
    return LayerSpec("conv_transpose2d", name, {
        "in_ch": in_ch, "out_ch": out_ch, "in_size": in_size,
        "kernel": kernel, "stride": stride, "pad": pad, "out_size": out_size,
    })


def batch_norm(name: str, dim: int, momentum: float = 0.1) -> LayerSpec:
    """Per-channel batch normalization; dim is the channel count."""
    return LayerSpec("batch_norm", name, {"dim": dim, "momentum": momentum})


def activation(name: str, fn: str) -> LayerSpec:
    if fn not in ACTIVATIONS:
        raise ValueError(f"unknown activation {fn!r}; expected one of {ACTIVATIONS}")
    return LayerSpec("activation", name, {"fn": fn})


def param_shapes(spec: LayerSpec) -> dict[str, tuple]:
    """Parameter field -> shape for one layer. Empty for activations."""
    if spec.kind == "dense":
        return {"w": (spec.in_dim, spec.out_dim), "b": (spec.out_dim,)}
    if spec.kind == "conv2d":
        return {"w": (spec.out_ch, spec.in_ch, spec.kernel, spec.kernel), "b": (spec.out_ch,)}
    if spec.kind == "conv_transpose2d":
        return {"w": (spec.in_ch, spec.out_ch, spec.kernel, spec.kernel), "b": (spec.out_ch,)}
    if spec.kind == "batch_norm":
        return {"gamma": (spec.dim,), "beta": (spec.dim,),
                "rmean": (spec.dim,), "rvar": (spec.dim,)}
    if spec.kind == "activation":
        return {}
    raise ValueError(f"unknown layer kind {spec.kind!r}")


def fan_in(spec: LayerSpec) -> int:
    if spec.kind == "dense":
        return spec.in_dim
    if spec.kind in ("conv2d", "conv_transpose2d"):
        return spec.in_ch * spec.kernel * spec.kernel
    raise ValueError(f"layer kind {spec.kind!r} has no fan-in")


# ---------------------------------------------------------------------------
# im2col / col2im


def _im2col_index(in_ch, kernel, stride, out_size):
    # (C*K*K, out*out) gather index into the padded image
    c = np.repeat(np.arange(in_ch), kernel * kernel)
    ki = np.tile(np.repeat(np.arange(kernel), kernel), in_ch)
    kj = np.tile(np.arange(kernel), kernel * in_ch)
    oi = stride * np.repeat(np.arange(out_size), out_size)
    oj = stride * np.tile(np.arange(out_size), out_size)
    rows = ki[:, None] + oi[None, :]
    cols = kj[:, None] + oj[None, :]
    return c, rows, cols


def im2col(x, kernel, stride, pad, out_size):
    """(N, C, H, H) -> (N, C*K*K, out*out) patch matrix."""
    in_ch = x.shape[1]
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    c, rows, cols = _im2col_index(in_ch, kernel, stride, out_size)
    return x[:, c[:, None], rows, cols]


def col2im(cols, n, in_ch, in_size, kernel, stride, pad, out_size):
    """Scatter-add inverse of im2col. cols: (N, C*K*K, out*out)."""
    padded = in_size + 2 * pad
    out = np.zeros((n, in_ch, padded, padded), dtype=np.float64)
    c, rows, cols_idx = _im2col_index(in_ch, kernel, stride, out_size)
    np.add.at(out, (slice(None), c[:, None], rows, cols_idx), cols)
    if pad:
        out = out[:, :, pad:-pad, pad:-pad]
    return out


# ---------------------------------------------------------------------------
# per-kind forward / backward
#
# Each forward returns (y, cache); each backward takes (spec, params, cache, gy)
# and returns (gx, {field: grad}).


def dense_forward(spec, params, x):
    w = params[f"{spec.name}.w"].array
    b = params[f"{spec.name}.b"].array
    y = x @ w + b
    return y, x


def dense_backward(spec, params, cache, gy, param_grads=True):
    w = params[f"{spec.name}.w"].array
    x = cache
    gx = gy @ w.T
    if not param_grads:
        return gx, {}
    return gx, {"w": x.T @ gy, "b": gy.sum(axis=0)}


def conv2d_forward(spec, params, x):
    w = params[f"{spec.name}.w"].array
    b = params[f"{spec.name}.b"].array
    n = x.shape[0]
    cols = im2col(x, spec.kernel, spec.stride, spec.pad, spec.out_size)
    wm = w.reshape(spec.out_ch, -1)
    # (N, out_ch, out*out) via one matmul over the batch
    y = np.matmul(wm[None], cols) + b[None, :, None]
    y = y.reshape(n, spec.out_ch, spec.out_size, spec.out_size)
    return y, cols


def conv2d_backward(spec, params, cache, gy, param_grads=True):
    w = params[f"{spec.name}.w"].array
    cols = cache
    n = gy.shape[0]
    gym = gy.reshape(n, spec.out_ch, -1)
    wm = w.reshape(spec.out_ch, -1)
    gcols = np.matmul(wm.T[None], gym)
    gx = col2im(gcols, n, spec.in_ch, spec.in_size,
                spec.kernel, spec.stride, spec.pad, spec.out_size)
    if not param_grads:
        return gx, {}
    gw = np.einsum("nop,nkp->ok", gym, cols, optimize=True).reshape(w.shape)
    gb = gym.sum(axis=(0, 2))
    return gx, {"w": gw, "b": gb}


def conv_transpose2d_forward(spec, params, x):
    # y = col2im(W^T x) : exact adjoint of conv2d with the same geometry
    w = params[f"{spec.name}.w"].array
    b = params[f"{spec.name}.b"].array
    n = x.shape[0]
    wm = w.reshape(spec.in_ch, -1)  # (in_ch, out_ch*K*K)
    xm = x.reshape(n, spec.in_ch, -1)
    cols = np.matmul(wm.T[None], xm)  # (N, out_ch*K*K, in*in)
    y = col2im(cols, n, spec.out_ch, spec.out_size,
               spec.kernel, spec.stride, spec.pad, spec.in_size)
    y += b[None, :, None, None]
    return y, x


def conv_transpose2d_backward(spec, params, cache, gy, param_grads=True):
    w = params[f"{spec.name}.w"].array
    x = cache
    n = gy.shape[0]
    gcols = im2col(gy, spec.kernel, spec.stride, spec.pad, spec.in_size)
    wm = w.reshape(spec.in_ch, -1)
    gx = np.matmul(wm[None], gcols).reshape(x.shape)
    if not param_grads:
        return gx, {}
    xm = x.reshape(n, spec.in_ch, -1)
    gw = np.einsum("ncp,nkp->ck", xm, gcols, optimize=True).reshape(w.shape)
    gb = gy.sum(axis=(0, 2, 3))
    return gx, {"w": gw, "b": gb}


def _bn_axes(x):
    # channel axis is 1 for images, last for flat features
    if x.ndim == 4:
        return (0, 2, 3), (1, -1, 1, 1)
    if x.ndim == 2:
        return (0,), (1, -1)
    raise ValueError(f"batch_norm expects 2D or 4D input, got {x.ndim}D")


def batch_norm_forward(spec, params, x, mode):
    gamma = params[f"{spec.name}.gamma"].array
    beta = params[f"{spec.name}.beta"].array
    axes, bshape = _bn_axes(x)
    if mode == "train":
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        rmean = params[f"{spec.name}.rmean"].array
        rvar = params[f"{spec.name}.rvar"].array
        m = spec.momentum
        rmean *= 1.0 - m
        rmean += m * mean
        rvar *= 1.0 - m
        rvar += m * var
    else:
        mean = params[f"{spec.name}.rmean"].array
        var = params[f"{spec.name}.rvar"].array
    inv = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mean.reshape(bshape)) * inv.reshape(bshape)
    y = gamma.reshape(bshape) * xhat + beta.reshape(bshape)
    return y, (xhat, inv, mode)


def batch_norm_backward(spec, params, cache, gy, param_grads=True):
    gamma = params[f"{spec.name}.gamma"].array
    xhat, inv, mode = cache
    axes, bshape = _bn_axes(gy)
    ggamma = (gy * xhat).sum(axis=axes)
    gbeta = gy.sum(axis=axes)
    gxhat = gy * gamma.reshape(bshape)
    if mode == "train":
        m = gy.size // gamma.size
        sg = gxhat.sum(axis=axes)
        sgx = (gxhat * xhat).sum(axis=axes)
        gx = (inv.reshape(bshape) / m) * (
            m * gxhat - sg.reshape(bshape) - xhat * sgx.reshape(bshape)
        )
    else:
        gx = gxhat * inv.reshape(bshape)
    if not param_grads:
        return gx, {}
    return gx, {"gamma": ggamma, "beta": gbeta}


def sigmoid_clamp(x):
    """Numerically stable logistic; never overflows in either tail. Outputs
    stay strictly inside (0, 1): saturated values are pulled in by one ulp."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return np.clip(out, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))


def activation_forward(spec, params, x):
    fn = spec.fn
    if fn == "identity":
        return x, None
    if fn == "relu":
        y = np.maximum(x, 0.0)
        return y, x
    if fn == "elu":
        y = np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))
        return y, (x, y)
    if fn == "sigmoid":
        y = sigmoid_clamp(x)
        return y, y
    if fn == "tanh":
        y = np.tanh(x)
        return y, y
    raise ValueError(f"unknown activation {fn!r}")


def activation_backward(spec, params, cache, gy, param_grads=True):
    fn = spec.fn
    if fn == "identity":
        return gy, {}
    if fn == "relu":
        x = cache
        return gy * (x > 0), {}
    if fn == "elu":
        x, y = cache
        return gy * np.where(x > 0, 1.0, y + 1.0), {}
    if fn == "sigmoid":
        y = cache
        return gy * y * (1.0 - y), {}
    if fn == "tanh":
        y = cache
        return gy * (1.0 - y * y), {}
    raise ValueError(f"unknown activation {fn!r}")
