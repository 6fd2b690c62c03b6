"""Versioned binary checkpoint container.

Layout (all integers little-endian)::

    magic      8 bytes  b"SSIMCKPT"
    version    u32
    fingerprint  u32 length + ASCII hex SHA-256 of the config
    epoch      i64
    best_val   f64
    count      u32
    count x tensor:
        name   u32 length + UTF-8
        rank   u32
        dims   rank x i64
        data   prod(dims) x f64
"""
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict

import numpy as np

from .errors import DataFormatError

MAGIC = b"SSIMCKPT"
VERSION = 1


@dataclass
class Checkpoint:
    fingerprint: str
    epoch: int
    best_val: float
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)

    def parameters(self):
        return {k: v for k, v in self.tensors.items() if not k.startswith("velocity/")}

    def velocities(self):
        return {k: v for k, v in self.tensors.items() if k.startswith("velocity/")}


def _pack_str(s):
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def dumps(ckpt):
    out = [MAGIC, struct.pack("<I", VERSION), _pack_str(ckpt.fingerprint),
           struct.pack("<qd", ckpt.epoch, ckpt.best_val), struct.pack("<I", len(ckpt.tensors))]
    for name, arr in ckpt.tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        out.append(_pack_str(name))
        out.append(struct.pack("<I", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}q", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, buf, path):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise DataFormatError(f"{self.path}: truncated checkpoint")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self):
        (n,) = self.unpack("<I")
        return self.take(n).decode("utf-8")


def loads(buf, path="<bytes>"):
    r = _Reader(buf, path)
    if r.take(len(MAGIC)) != MAGIC:
        raise DataFormatError(f"{path}: not a checkpoint (bad magic)")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise DataFormatError(f"{path}: unsupported checkpoint version {version}")
    fingerprint = r.string()
    epoch, best_val = r.unpack("<qd")
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        name = r.string()
        (rank,) = r.unpack("<I")
        dims = r.unpack(f"<{rank}q")
        size = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(r.take(8 * size), dtype="<f8").astype(np.float64)
        tensors[name] = data.reshape(dims)
    if r.pos != len(buf):
        raise DataFormatError(f"{path}: {len(buf) - r.pos} trailing bytes")
    return Checkpoint(fingerprint, epoch, best_val, tensors)


def save(path, ckpt):
    Path(path).write_bytes(dumps(ckpt))


def load(path):
    return loads(Path(path).read_bytes(), path)


def from_training(model, optimizer, fingerprint, epoch, best_val):
    tensors = {k: v.copy() for k, v in model.named_parameters().items()}
    if optimizer is not None:
        tensors.update({k: v.copy() for k, v in optimizer.state_dict().items()})
    return Checkpoint(fingerprint, epoch, best_val, tensors)


def restore(ckpt, model, optimizer=None):
    params = model.named_parameters()
    stored = ckpt.parameters()
    if set(stored) != set(params):
        raise DataFormatError("checkpoint parameters do not match the model")
    for k, v in params.items():
        if stored[k].shape != v.shape:
            raise DataFormatError(f"{k}: checkpoint shape {stored[k].shape} vs model {v.shape}")
        v[...] = stored[k]
    if optimizer is not None:
        optimizer.load_state_dict(ckpt.velocities())
