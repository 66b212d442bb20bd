"""Adam with bias correction, plus global-norm gradient clipping."""

from __future__ import annotations

import numpy as np

from .tensor import ParamSet


class Adam:
    """Standard Adam (beta1 0.9, beta2 0.999, eps 1e-8) over a ParamSet.

    Moment buffers are keyed by parameter name and created lazily so the same
    optimizer can drive sets whose membership is fixed after construction.
    """

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: ParamSet, grads: ParamSet):
        """One update in place. Raises on any non-finite gradient, naming it."""
        for name, g in grads.trainable():
            if not np.all(np.isfinite(g.array)):
                raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, g in grads.trainable():
            p = params[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p.array)
                self.v[name] = np.zeros_like(p.array)
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1.0 - b1) * g.array
            v *= b2
            v += (1.0 - b2) * g.array * g.array
            p.array -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self) -> dict:
        return {"t": self.t,
                "m": {k: a.copy() for k, a in self.m.items()},
                "v": {k: a.copy() for k, a in self.v.items()}}

    def load_state(self, state: dict):
        self.t = int(state["t"])
        self.m = {k: np.ascontiguousarray(a, dtype=np.float64) for k, a in state["m"].items()}
        self.v = {k: np.ascontiguousarray(a, dtype=np.float64) for k, a in state["v"].items()}


def clip_global_norm(grads: ParamSet, max_norm: float = 10.0) -> float:
    """Rescale all gradients so their joint L2 norm is at most max_norm.

    Returns the pre-clip norm.
    """
    total = 0.0
    for _, g in grads.trainable():
        total += float(np.dot(g.data, g.data))
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for _, g in grads.trainable():
            g.array *= scale
    return norm
