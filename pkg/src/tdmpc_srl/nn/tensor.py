"""Flat float64 tensors with an optional gradient slot, and named parameter sets."""

from __future__ import annotations

import numpy as np


class Tensor:
    """An n-dimensional float64 array plus an optional gradient buffer.

    Values are stored row-major; ``data`` exposes them as a flat view so the
    shape invariant (``prod(shape) == data.size``) holds by construction.
    """

    __slots__ = ("array", "grad")

    def __init__(self, array, grad=None):
        self.array = np.ascontiguousarray(array, dtype=np.float64)
        self.grad = None if grad is None else np.ascontiguousarray(grad, dtype=np.float64)
        if self.grad is not None and self.grad.shape != self.array.shape:
            raise ValueError(f"grad shape {self.grad.shape} != value shape {self.array.shape}")

    @classmethod
    def zeros(cls, shape) -> "Tensor":
        return cls(np.zeros(shape, dtype=np.float64))

    @property
    def shape(self) -> tuple:
        return self.array.shape

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the values."""
        return self.array.reshape(-1)

    def zero_grad(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.array)
        else:
            self.grad.fill(0.0)

    def copy(self) -> "Tensor":
        return Tensor(self.array.copy(), None if self.grad is None else self.grad.copy())

    def __repr__(self):
        return f"Tensor(shape={self.shape})"


def _is_stat(name: str) -> bool:
    return name.endswith("rmean") or name.endswith("rvar")


class ParamSet:
    """Ordered name -> Tensor map for one network's parameters.

    Running batch-norm statistics live here too (names ending in ``rmean`` /
    ``rvar``) but are excluded from ``trainable()`` and from gradient buffers.
    """

    def __init__(self, entries: dict[str, Tensor] | None = None):
        self._entries: dict[str, Tensor] = {}
        if entries:
            for name, t in entries.items():
                self.add(name, t)

    def add(self, name: str, tensor: Tensor):
        if name in self._entries:
            raise ValueError(f"duplicate parameter name {name!r}")
        self._entries[name] = tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self):
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def trainable(self):
        """(name, tensor) pairs excluding running statistics."""
        return [(n, t) for n, t in self._entries.items() if not _is_stat(n)]

    def zeros_like(self) -> "ParamSet":
        """A gradient buffer: zero tensors for every trainable entry."""
        return ParamSet({n: Tensor.zeros(t.shape) for n, t in self.trainable()})

    def copy(self) -> "ParamSet":
        return ParamSet({n: t.copy() for n, t in self._entries.items()})

    def __repr__(self):
        return f"ParamSet({', '.join(self._entries)})"
