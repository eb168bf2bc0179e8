"""Binary weight files.

Layout (little-endian)::

    b"MSPE"  u32 version (=1)
    u32 n_layers, n_heads, head_dim, mlp_dim, vocab_size, max_seq_len, tied
    f64 rope_base
    repeated until EOF:
        u16 name_len, name (utf-8), u8 rank, u32 dims[rank], f64 payload (row-major)

A ``<path>.json`` sidecar carries the same config for humans.
"""

import json
import os
import struct

import numpy as np

from .errors import (
    BadHeaderError,
    ConfigError,
    NonFiniteWeightsError,
    WeightFileNotFoundError,
    WeightShapeError,
)
from .model import ModelConfig, TransformerModel, expected_shapes, weights_from_tensors

MAGIC = b"MSPE"
VERSION = 1
_CONFIG_FIELDS = ("n_layers", "n_heads", "head_dim", "mlp_dim", "vocab_size", "max_seq_len")
_HEADER = struct.Struct("<4sI" + "I" * (len(_CONFIG_FIELDS) + 1) + "d")


def sidecar_path(path):
    return os.fspath(path) + ".json"


def save_weights(path, config, weights, sidecar=True, extra=None):
    header = _HEADER.pack(
        MAGIC, VERSION, *(int(getattr(config, f)) for f in _CONFIG_FIELDS),
        int(config.tied_embeddings), float(config.rope_base),
    )
    chunks = [header]
    for name, arr in weights.named_tensors():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))
    if sidecar:
        with open(sidecar_path(path), "w", encoding="utf-8") as fh:
            doc = {"format": "MSPE", "version": VERSION, "config": config.to_dict()}
            doc.update(extra or {})
            json.dump(doc, fh, indent=2)


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.off = 0

    def take(self, n, what):
        if self.off + n > len(self.buf):
            raise BadHeaderError(f"bad header: file truncated while reading {what}")
        out = self.buf[self.off:self.off + n]
        self.off += n
        return out

    def unpack(self, fmt, what):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, what))

    @property
    def exhausted(self):
        return self.off >= len(self.buf)


def load_weights(path):
    """Read and validate a weight file; returns ``(ModelConfig, Weights)``."""
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except FileNotFoundError as exc:
        raise WeightFileNotFoundError(f"no weight file at {path}") from exc
    rd = _Reader(buf)
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadHeaderError(f"bad header: {path} does not start with {MAGIC!r}")
    magic, version, *fields, base = rd.unpack(_HEADER.format, "header")
    if version != VERSION:
        raise BadHeaderError(f"bad header: unsupported version {version}")
    *dims, tied = fields
    try:
        config = ModelConfig(**dict(zip(_CONFIG_FIELDS, dims)), rope_base=base, tied_embeddings=bool(tied))
    except ConfigError as exc:
        raise ConfigError(f"invalid config in {path}: {exc}") from exc

    tensors = {}
    while not rd.exhausted:
        (name_len,) = rd.unpack("<H", "tensor name length")
        name = rd.take(name_len, "tensor name").decode("utf-8")
        (rank,) = rd.unpack("<B", f"{name} rank")
        shape = rd.unpack(f"<{rank}I", f"{name} dims")
        count = int(np.prod(shape, dtype=np.int64))
        payload = rd.take(8 * count, f"{name} payload")
        tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)

    shapes = expected_shapes(config)
    missing = sorted(set(shapes) - set(tensors))
    extra = sorted(set(tensors) - set(shapes))
    if missing or extra:
        raise WeightShapeError(f"tensor set mismatch; missing={missing} unexpected={extra}")
    for name, shape in shapes.items():
        if tensors[name].shape != shape:
            raise WeightShapeError(f"{name}: expected {shape}, got {tensors[name].shape}")
        if not np.all(np.isfinite(tensors[name])):
            raise NonFiniteWeightsError(f"{name} contains NaN or Inf")
    return config, weights_from_tensors(config, tensors)


def load_model(path):
    return TransformerModel(*load_weights(path))
