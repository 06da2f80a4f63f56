"""Binary checkpoint: model config, standardizer and every trained tensor.

Layout (all integers little-endian)::

    magic       8 bytes   b"SSDHCKPT"
    version     u32       FORMAT_VERSION
    config      u32 length + UTF-8 JSON (sorted keys, compact separators)
    std.mean    u32 count + count x f64
    std.std     u32 count + count x f64
    tensors     u32 count, then per tensor:
                  u16 name length + UTF-8 name, u8 ndim, ndim x u32 dims,
                  prod(dims) x f64 in row-major order

Nothing may follow the last tensor. Saving the same objects twice yields the
same bytes, so a save -> load -> save cycle is byte-identical.

File-system failures propagate as ``OSError``; anything wrong with the
contents raises ``CorruptCheckpointError`` naming the field that failed.
"""

import json
import os
import struct

import numpy as np

from .data import FEATURES, Standardizer
from .errors import ConfigError, CorruptCheckpointError, InvalidInputError
from .layers import GRU_CONVENTION
from .model import ModelConfig, ModelParams

MAGIC = b"SSDHCKPT"
FORMAT_VERSION = 1

_F64 = np.dtype("<f8")


def _pack_f64(a) -> bytes:
    return np.ascontiguousarray(a, dtype=_F64).tobytes()


def _config_bytes(cfg: ModelConfig) -> bytes:
    doc = dict(cfg.to_dict())
    doc["gru_convention"] = GRU_CONVENTION
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def encode(params: ModelParams, cfg: ModelConfig, standardizer: Standardizer) -> bytes:
    if params.config != cfg:
        raise ConfigError("params were built for a different model config")
    out = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    cb = _config_bytes(cfg)
    out += [struct.pack("<I", len(cb)), cb]
    for vec in (standardizer.mean, standardizer.std):
        out += [struct.pack("<I", vec.size), _pack_f64(vec)]
    tensors = list(params.named_tensors())
    out.append(struct.pack("<I", len(tensors)))
    for name, t in tensors:
        nb = name.encode("utf-8")
        out += [struct.pack("<H", len(nb)), nb, struct.pack("<B", t.ndim)]
        out.append(struct.pack(f"<{t.ndim}I", *t.shape))
        out.append(_pack_f64(t))
    return b"".join(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n, field):
        if self.pos + n > len(self.buf):
            raise CorruptCheckpointError(field, "file is truncated")
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, field):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), field))

    def f64(self, count, field):
        return np.frombuffer(self.take(8 * count, field), dtype=_F64).astype(np.float64)


def decode(buf: bytes):
    """Parse checkpoint bytes into (params, cfg, standardizer)."""
    r = _Reader(buf)
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise CorruptCheckpointError("magic", "not a checkpoint file (bad magic bytes)")
    (version,) = r.unpack("<I", "version")
    if version != FORMAT_VERSION:
        raise CorruptCheckpointError(
            "version", f"unsupported format version {version} (expected {FORMAT_VERSION})"
        )

    (clen,) = r.unpack("<I", "config")
    try:
        doc = json.loads(r.take(clen, "config").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpointError("config", f"unreadable JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise CorruptCheckpointError("config", "expected a JSON object")
    convention = doc.pop("gru_convention", None)
    if convention != GRU_CONVENTION:
        raise CorruptCheckpointError("config.gru_convention", f"unexpected value {convention!r}")
    try:
        cfg = ModelConfig(**doc)
    except (TypeError, ConfigError) as exc:
        raise CorruptCheckpointError("config", str(exc)) from None

    stats = []
    for field in ("standardizer.mean", "standardizer.std"):
        (count,) = r.unpack("<I", field)
        if count != len(FEATURES):
            raise CorruptCheckpointError(field, f"expected {len(FEATURES)} values, found {count}")
        stats.append(r.f64(count, field))
    try:
        std = Standardizer(*stats)
    except InvalidInputError as exc:
        raise CorruptCheckpointError("standardizer", str(exc)) from None

    expected = cfg.tensor_shapes()
    (count,) = r.unpack("<I", "tensors")
    if count != len(expected):
        raise CorruptCheckpointError("tensors", f"expected {len(expected)} tensors, found {count}")
    tensors = {}
    for want_name, want_shape in expected:
        field = f"tensor[{want_name}]"
        (nlen,) = r.unpack("<H", field)
        name = r.take(nlen, field).decode("utf-8", errors="replace")
        if name != want_name:
            raise CorruptCheckpointError(field, f"found tensor named {name!r}")
        (ndim,) = r.unpack("<B", field)
        shape = r.unpack(f"<{ndim}I", field)
        if tuple(shape) != tuple(want_shape):
            raise CorruptCheckpointError(
                f"{field}.shape", f"declared {tuple(shape)}, config implies {tuple(want_shape)}"
            )
        tensors[name] = r.f64(int(np.prod(shape, dtype=np.int64)), field).reshape(shape)
    if r.pos != len(buf):
        raise CorruptCheckpointError("trailer", f"{len(buf) - r.pos} unexpected trailing bytes")
    return ModelParams.from_named(tensors, cfg), cfg, std


def save_checkpoint(path, params: ModelParams, cfg: ModelConfig, standardizer: Standardizer):
    data = encode(params, cfg, standardizer)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return decode(fh.read())
