"""AdamW and the binary parameter checkpoint format."""

from __future__ import annotations

import hashlib
import io
import struct
from typing import Iterable

import numpy as np

from .autodiff import Parameter

MAGIC = b"AKGP"
VERSION = 1


def adamw_step(params: Iterable[Parameter], lr: float, beta1: float = 0.9,
               beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.0):
    """One AdamW update with decoupled weight decay; gradients are zeroed after."""
    for p in params:
        p.step += 1
        g = p.grad
        if weight_decay:
            p.data *= 1.0 - lr * weight_decay
        p.m = beta1 * p.m + (1.0 - beta1) * g
        p.v = beta2 * p.v + (1.0 - beta2) * g * g
        m_hat = p.m / (1.0 - beta1 ** p.step)
        v_hat = p.v / (1.0 - beta2 ** p.step)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.zero_grad()


def zero_grad(params: Iterable[Parameter]):
    for p in params:
        p.zero_grad()


def dumps_checkpoint(arrays: dict[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(arrays)))
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


def loads_checkpoint(data: bytes) -> dict[str, np.ndarray]:
    if data[:4] != MAGIC:
        raise ValueError("not a parameter checkpoint (bad magic)")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos = 12
    out = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos:pos + n].decode("utf-8")
        pos += n
        (rank,) = struct.unpack_from("<I", data, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}Q", data, pos)
        pos += 8 * rank
        size = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(dims)
        pos += 8 * size
        out[name] = arr.astype(np.float64)
    if pos != len(data):
        raise ValueError("trailing bytes in checkpoint")
    return out


def save_checkpoint(path, arrays: dict[str, np.ndarray]):
    with open(path, "wb") as fh:
        fh.write(dumps_checkpoint(arrays))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return loads_checkpoint(fh.read())


def checkpoint_hash(arrays: dict[str, np.ndarray]) -> str:
    return hashlib.sha256(dumps_checkpoint(arrays)).hexdigest()
