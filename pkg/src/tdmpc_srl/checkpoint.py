"""Binary checkpoint store: named float64 tensors plus an env-step counter.

Layout (all integers little-endian):

    magic   8 bytes  b"TDMPCSRL"
    version u32
    env_step u64
    count   u64          number of tensor records
    then per record:
        name_len u32, name (UTF-8), rank u32, dims rank*u64,
        data prod(dims) float64 (little-endian)

Rank-0 records carry exactly one float. Files are written atomically
(temp file + rename) so a crashed save never leaves a partial checkpoint.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"TDMPCSRL"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, tensors: dict, env_step: int = 0):
    """tensors: name -> float64 ndarray (any rank, rank 0 = scalar)."""
    if env_step < 0:
        raise CheckpointError(f"env_step must be nonnegative, got {env_step}")
    path = Path(path)
    chunks = [MAGIC, struct.pack("<I", VERSION), struct.pack("<Q", env_step),
              struct.pack("<Q", len(tensors))]
    for name, arr in tensors.items():
        # not ascontiguousarray: that would promote rank-0 scalars to rank 1
        arr = np.asarray(arr, dtype=np.float64)
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b"")
        chunks.append(arr.astype("<f8").tobytes())
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    os.replace(tmp, path)


class _Reader:
    __slots__ = ("buf", "pos", "path")

    def __init__(self, buf: bytes, path):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]


def load_checkpoint(path):
    """Returns (tensors dict, env_step). Rejects bad magic, version, truncation."""
    r = _Reader(Path(path).read_bytes(), path)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    env_step = r.u64()
    count = r.u64()
    tensors = {}
    for _ in range(count):
        name = r.take(r.u32()).decode("utf-8")
        rank = r.u32()
        dims = tuple(r.u64() for _ in range(rank))
        n = 1
        for d in dims:
            n *= d
        data = np.frombuffer(r.take(8 * n), dtype="<f8").astype(np.float64)
        if name in tensors:
            raise CheckpointError(f"{path}: duplicate tensor {name!r}")
        tensors[name] = data.reshape(dims)
    if r.pos != len(r.buf):
        raise CheckpointError(f"{path}: {len(r.buf) - r.pos} trailing bytes")
    return tensors, env_step


# -- config embedding --------------------------------------------------------
# A checkpoint carries its run configuration so evaluation can rebuild the
# environment and model without a separate config file. The text is stored
# as a rank-1 float64 tensor of UTF-8 byte values (0..255), which keeps the
# file format uniform.

CONFIG_KEY = "__config__"


def encode_config_text(text: str) -> np.ndarray:
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.float64)


def decode_config_text(arr: np.ndarray) -> str:
    vals = np.asarray(arr)
    if vals.ndim != 1 or np.any(vals < 0) or np.any(vals > 255):
        raise CheckpointError("malformed embedded config record")
    return vals.astype(np.uint8).tobytes().decode("utf-8")
