"""TOLD world model: six parameterized heads plus the EMA target copy.

Heads: representation h, latent dynamics d, reward r, twin value q (min-Q),
policy pi, and the reconstruction decoder h_inv mapping latents back to
observation estimates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn


class HeadTape:
    """Tapes for one Head forward: one per stage, plus reshape bookkeeping."""

    __slots__ = ("tapes", "pre_shapes", "single")

    def __init__(self, tapes, pre_shapes, single):
        self.tapes = tapes
        self.pre_shapes = pre_shapes
        self.single = single


class Head:
    """A feed-forward head: one or more LayerSpec stacks joined by reshapes.

    stages is a list of (specs, reshape) pairs; reshape is the per-sample
    shape the stage output is viewed as before feeding the next stage
    ("flatten", an explicit tuple, or None to pass through).
    """

    def __init__(self, stages, in_rank: int):
        self.stages = stages
        self.in_rank = in_rank

    def all_specs(self):
        return [spec for specs, _ in self.stages for spec in specs]

    def init_params(self, rng) -> nn.ParamSet:
        return nn.init_params(self.all_specs(), rng)

    def forward(self, params, x, mode: str = "eval"):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == self.in_rank
        if single:
            x = x[None]
        tapes, pre_shapes = [], []
        for specs, reshape in self.stages:
            x, tape = nn.forward(specs, params, x, mode)
            tapes.append(tape)
            pre_shapes.append(x.shape)
            if reshape == "flatten":
                x = x.reshape(x.shape[0], -1)
            elif reshape is not None:
                x = x.reshape((x.shape[0],) + tuple(reshape))
        if single:
            x = x[0]
        return x, HeadTape(tapes, pre_shapes, single)

    def apply(self, params, x, mode: str = "eval"):
        y, _ = self.forward(params, x, mode)
        return y

    def backward(self, tape: HeadTape, gy, into=None, param_grads: bool = True):
        gy = np.asarray(gy, dtype=np.float64)
        if tape.single:
            gy = gy[None]
        for t, pre_shape in zip(reversed(tape.tapes), reversed(tape.pre_shapes)):
            gy = gy.reshape(pre_shape)
            gy = nn.backward(t, gy, into=into, param_grads=param_grads)
        if tape.single:
            gy = gy[0]
        return gy


def _mlp(sizes, final_act: str | None = None, act: str = "elu"):
    specs = []
    last = len(sizes) - 2
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        specs.append(nn.dense(f"fc{i + 1}", a, b))
        if i < last:
            specs.append(nn.activation(f"act{i + 1}", act))
    if final_act is not None:
        specs.append(nn.activation("out", final_act))
    return specs


@dataclass
class ToldParams:
    """Parameters of all six heads. The target copy has identical structure."""

    h: nn.ParamSet
    d: nn.ParamSet
    r: nn.ParamSet
    q: nn.ParamSet
    pi: nn.ParamSet
    h_inv: nn.ParamSet

    HEADS = ("h", "d", "r", "q", "pi", "h_inv")

    def head(self, name: str) -> nn.ParamSet:
        return getattr(self, name)

    def named_tensors(self):
        """(qualified name, Tensor) pairs in a fixed order, for persistence."""
        for head in self.HEADS:
            for name, t in self.head(head).items():
                yield f"{head}.{name}", t

    def copy(self) -> "ToldParams":
        return ToldParams(**{h: self.head(h).copy() for h in self.HEADS})

    def merged(self, heads=HEADS) -> nn.ParamSet:
        """Flat view over selected heads; shares the underlying tensors."""
        out = nn.ParamSet()
        for head in heads:
            for name, t in self.head(head).items():
                out.add(f"{head}.{name}", t)
        return out


MODEL_HEADS = ("h", "d", "r", "q", "h_inv")  # trained by the model objective
POLICY_HEADS = ("pi",)


class WorldModel:
    """Architecture container: owns the layer stacks of every head.

    obs_shape is (n,) for state observations or (channels, R, R) for images
    (R a multiple of 16 so four stride-2 stages close the spatial chain).
    """

    def __init__(self, obs_shape, action_dim: int, d_latent: int = 50,
                 hidden: int = 256, double_q: bool = True):
        self.obs_shape = tuple(int(v) for v in obs_shape)
        self.action_dim = int(action_dim)
        self.d_latent = int(d_latent)
        self.hidden = int(hidden)
        self.double_q = bool(double_q)
        self.image_mode = len(self.obs_shape) == 3
        if self.image_mode:
            c, r, r2 = self.obs_shape
            if r != r2:
                raise ValueError(f"image observations must be square, got {self.obs_shape}")
            if r % 16 != 0 or r < 16:
                raise ValueError(f"image resolution must be a positive multiple of 16, got {r}")
            self.h = self._image_encoder(c, r)
            self.h_inv = self._image_decoder(c, r)
        elif len(self.obs_shape) == 1:
            n = self.obs_shape[0]
            self.h = Head([(_mlp([n, hidden, d_latent]), None)], in_rank=1)
            self.h_inv = Head([(_mlp([d_latent, hidden, n]), None)], in_rank=1)
        else:
            raise ValueError(f"observation shape must be rank 1 or 3, got {self.obs_shape}")
        m = self.action_dim
        self.d = Head([(_mlp([d_latent + m, hidden, hidden, d_latent]), None)], in_rank=1)
        self.r = Head([(_mlp([d_latent + m, hidden, hidden, 1]), None)], in_rank=1)
        q_sizes = [d_latent + m, hidden, hidden, 1]
        self.q1 = Head([(self._prefixed(_mlp(q_sizes), "q1"), None)], in_rank=1)
        self.q2 = Head([(self._prefixed(_mlp(q_sizes), "q2"), None)], in_rank=1)
        self.pi = Head([(_mlp([d_latent, hidden, hidden, m], final_act="tanh"), None)],
                       in_rank=1)

    @staticmethod
    def _prefixed(specs, prefix):
        return [nn.LayerSpec(s.kind, f"{prefix}.{s.name}", dict(s.extra)) for s in specs]

    def _image_encoder(self, c, r):
        chans = (c, 16, 32, 64, 64)
        specs, size = [], r
        for i in range(4):
            specs.append(nn.conv2d(f"conv{i + 1}", chans[i], chans[i + 1], size,
                                   kernel=3, stride=2, pad=1))
            specs.append(nn.activation(f"act{i + 1}", "relu"))
            size //= 2
        feat = chans[-1] * size * size
        return Head([(specs, "flatten"),
                     ([nn.dense("proj", feat, self.d_latent)], None)], in_rank=3)

    def _image_decoder(self, c, r):
        base = r // 16
        chans = (64, 64, 32, 16, c)
        stage1 = [nn.dense("proj", self.d_latent, chans[0] * base * base)]
        specs, size = [], base
        for i in range(4):
            specs.append(nn.conv_transpose2d(f"deconv{i + 1}", chans[i], chans[i + 1],
                                             size, kernel=4, stride=2, pad=1))
            if i < 3:
                specs.append(nn.batch_norm(f"bn{i + 1}", chans[i + 1]))
                specs.append(nn.activation(f"act{i + 1}", "relu"))
            size *= 2
        specs.append(nn.activation("out", "sigmoid"))
        return Head([(stage1, (chans[0], base, base)), (specs, None)], in_rank=1)

    # -- parameter construction ------------------------------------------

    def init_params(self, rng: np.random.Generator) -> ToldParams:
        q = nn.init_params(self.q1.all_specs() + self.q2.all_specs(), rng)
        return ToldParams(
            h=self.h.init_params(rng),
            d=self.d.init_params(rng),
            r=self.r.init_params(rng),
            q=q,
            pi=self.pi.init_params(rng),
            h_inv=self.h_inv.init_params(rng),
        )

    # -- inference (no tapes) --------------------------------------------

    def encode(self, params: ToldParams, s):
        return self.h.apply(params.h, s)

    def dynamics(self, params: ToldParams, z, a):
        return self.d.apply(params.d, self._za(z, a))

    def reward(self, params: ToldParams, z, a):
        out = self.r.apply(params.r, self._za(z, a))
        return self._scalar(out)

    def q_pair(self, params: ToldParams, z, a):
        za = self._za(z, a)
        return (self._scalar(self.q1.apply(params.q, za)),
                self._scalar(self.q2.apply(params.q, za)))

    def q_value(self, params: ToldParams, z, a):
        q1, q2 = self.q_pair(params, z, a)
        if not self.double_q:
            return q1
        return np.minimum(q1, q2) if isinstance(q1, np.ndarray) else min(q1, q2)

    def policy_act(self, params: ToldParams, z):
        return self.pi.apply(params.pi, z)

    def reconstruct(self, params: ToldParams, z, mode: str = "eval"):
        return self.h_inv.apply(params.h_inv, z, mode)

    @staticmethod
    def _za(z, a):
        z = np.asarray(z, dtype=np.float64)
        a = np.asarray(a, dtype=np.float64)
        return np.concatenate([z, a], axis=-1)

    @staticmethod
    def _scalar(out):
        squeezed = out[..., 0]
        return float(squeezed) if squeezed.ndim == 0 else squeezed


def target_update(theta: ToldParams, theta_minus: ToldParams, zeta: float) -> ToldParams:
    """EMA tracking update, in place on theta_minus:

        theta_minus <- (1 - zeta) * theta_minus + zeta * theta

    Batch-norm running statistics are copied verbatim, not averaged.
    """
    if not 0.0 <= zeta < 1.0:
        raise ValueError(f"zeta must be in [0, 1), got {zeta}")
    for (name, src), (tname, dst) in zip(theta.named_tensors(),
                                         theta_minus.named_tensors()):
        if name != tname or src.array.shape != dst.array.shape:
            raise ValueError(f"target structure mismatch at {name!r} vs {tname!r}")
        if name.endswith("rmean") or name.endswith("rvar"):
            dst.array[...] = src.array
        else:
            dst.array *= 1.0 - zeta
            dst.array += zeta * src.array
    return theta_minus
