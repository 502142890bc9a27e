"""Binary model checkpoints.

Layout (all integers little-endian, struct '<'):

    magic   4 bytes  b"SSAT"
    version u32      currently 1
    kv block         u32 count, then per entry
                     u32 key length, utf-8 key, u32 value length, utf-8 value
    seed    u64
    epoch   u32
    arrays  u32 count, then per array
                     u32 name length, utf-8 name,
                     u32 ndim, ndim x u32 dims,
                     raw float32 little-endian values, row-major

The kv block stores the architecture config plus free-form strings such as
the vocabulary hash and training mode; keys are written sorted so the same
state always produces the same bytes. Floats round-trip through repr().
"""

from __future__ import annotations

import dataclasses
import struct
from dataclasses import dataclass

import numpy as np

from .encoder import EncoderConfig, EncoderModel

MAGIC = b"SSAT"
VERSION = 1


class CheckpointError(Exception):
    pass


@dataclass
class Checkpoint:
    config: EncoderConfig
    extras: dict
    seed: int
    epoch: int
    arrays: dict


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _read_str(buf: memoryview, off: int):
    (n,) = struct.unpack_from("<I", buf, off)
    off += 4
    return bytes(buf[off:off + n]).decode("utf-8"), off + n


def save_checkpoint(path, model: EncoderModel, seed: int, epoch: int, extras=None):
    extras = dict(extras or {})
    kv = {f.name: repr(getattr(model.config, f.name))
          for f in dataclasses.fields(EncoderConfig)}
    for k, v in extras.items():
        if k in kv:
            raise CheckpointError(f"extra key {k!r} collides with a config field")
        kv[k] = str(v)

    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(kv))]
    for k in sorted(kv):
        parts.append(_pack_str(k))
        parts.append(_pack_str(kv[k]))
    parts.append(struct.pack("<QI", seed, epoch))

    names = list(model.params)
    parts.append(struct.pack("<I", len(names)))
    for name in names:
        arr = model.params[name].data
        parts.append(_pack_str(name))
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())

    with open(path, "wb") as f:
        f.write(b"".join(parts))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        buf = memoryview(f.read())
    if bytes(buf[:4]) != MAGIC:
        raise CheckpointError(f"not a checkpoint file: bad magic {bytes(buf[:4])!r}")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off = 8

    (n_kv,) = struct.unpack_from("<I", buf, off)
    off += 4
    kv = {}
    for _ in range(n_kv):
        k, off = _read_str(buf, off)
        v, off = _read_str(buf, off)
        kv[k] = v

    seed, epoch = struct.unpack_from("<QI", buf, off)
    off += 12

    cfg_kwargs = {}
    extras = {}
    field_types = {f.name: f.type for f in dataclasses.fields(EncoderConfig)}
    for k, v in kv.items():
        if k in field_types:
            cfg_kwargs[k] = float(v) if field_types[k] == "float" else int(v)
        else:
            extras[k] = v
    missing = set(field_types) - set(cfg_kwargs)
    if missing:
        raise CheckpointError(f"checkpoint missing config fields: {sorted(missing)}")
    config = EncoderConfig(**cfg_kwargs)

    (n_arrays,) = struct.unpack_from("<I", buf, off)
    off += 4
    arrays = {}
    for _ in range(n_arrays):
        name, off = _read_str(buf, off)
        (ndim,) = struct.unpack_from("<I", buf, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", buf, off)
        off += 4 * ndim
        count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        arr = np.frombuffer(buf, dtype="<f4", count=count, offset=off).reshape(shape)
        arrays[name] = arr.astype(np.float32, copy=True)
        off += 4 * count
    if off != len(buf):
        raise CheckpointError(f"{len(buf) - off} trailing bytes after arrays")
    return Checkpoint(config, extras, int(seed), int(epoch), arrays)


def restore_model(ckpt: Checkpoint) -> EncoderModel:
    model = EncoderModel(ckpt.config, seed=0)
    model.load_param_arrays(ckpt.arrays)
    return model
