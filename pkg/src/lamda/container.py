"""Bit-exact file formats.

Weight container ("LDWT"): magic, u16 version, u32 tensor count, then per
tensor: u16 name length + UTF-8 name, u8 dtype (0=f32, 1=f64), u8 ndim,
u64 dims, raw little-endian data. No alignment padding; names unique.

Checkpoint ("LDCK"): magic, u16 version, u32 JSON metadata length, the
UTF-8 JSON metadata, then an embedded weight container payload.
"""

import io
import json
import struct

import numpy as np

from .errors import ConfigError, NumericalError

WEIGHT_MAGIC = b"LDWT"
CHECKPOINT_MAGIC = b"LDCK"
FORMAT_VERSION = 1

_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODE_FOR = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def write_weights_stream(fh, tensors):
    names = list(tensors)
    if len(set(names)) != len(names):
        raise ConfigError("tensor names must be unique")
    fh.write(WEIGHT_MAGIC)
    fh.write(struct.pack("<HI", FORMAT_VERSION, len(names)))
    for name in names:
        arr = np.asarray(tensors[name])
        if arr.dtype not in _CODE_FOR:
            raise ConfigError(f"tensor {name!r} has unsupported dtype {arr.dtype}")
        if not np.all(np.isfinite(arr)):
            raise NumericalError(f"refusing to serialize non-finite tensor {name!r}")
        raw = name.encode("utf-8")
        fh.write(struct.pack("<H", len(raw)))
        fh.write(raw)
        fh.write(struct.pack("<BB", _CODE_FOR[arr.dtype], arr.ndim))
        for dim in arr.shape:
            fh.write(struct.pack("<Q", dim))
        fh.write(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise ConfigError(f"truncated container while reading {what}")
    return buf


def read_weights_stream(fh):
    if _read_exact(fh, 4, "magic") != WEIGHT_MAGIC:
        raise ConfigError("not a weight container (bad magic)")
    version, count = struct.unpack("<HI", _read_exact(fh, 6, "header"))
    if version != FORMAT_VERSION:
        raise ConfigError(f"unsupported container version {version}")
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", _read_exact(fh, 2, "name length"))
        name = _read_exact(fh, nlen, "name").decode("utf-8")
        code, ndim = struct.unpack("<BB", _read_exact(fh, 2, "tensor header"))
        if code not in _DTYPE_CODES:
            raise ConfigError(f"tensor {name!r}: unknown dtype code {code}")
        dims = struct.unpack(
            f"<{ndim}Q", _read_exact(fh, 8 * ndim, "dims")
        ) if ndim else ()
        dtype = _DTYPE_CODES[code]
        n_items = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        raw = _read_exact(fh, n_items * dtype.itemsize, f"data of {name!r}")
        if name in tensors:
            raise ConfigError(f"duplicate tensor name {name!r}")
        tensors[name] = np.frombuffer(raw, dtype=dtype).reshape(dims).copy()
    return tensors


def write_weights(path, tensors):
    with open(path, "wb") as fh:
        write_weights_stream(fh, tensors)


def read_weights(path):
    with open(path, "rb") as fh:
        return read_weights_stream(fh)


def save_checkpoint(path, tensors, meta):
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<HI", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        write_weights_stream(fh, tensors)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != CHECKPOINT_MAGIC:
            raise ConfigError("not a checkpoint (bad magic)")
        version, mlen = struct.unpack("<HI", _read_exact(fh, 6, "header"))
        if version != FORMAT_VERSION:
            raise ConfigError(f"unsupported checkpoint version {version}")
        meta = json.loads(_read_exact(fh, mlen, "metadata").decode("utf-8"))
        tensors = read_weights_stream(fh)
    return tensors, meta


def checkpoint_from_result(result):
    """Flatten a TrainResult into (tensors, meta) for save_checkpoint."""
    tensors = {}
    for name, t in result.model.params.items():
        tensors[f"backbone/{name}"] = t.data
    trainable_rows = {}
    for module, st in result.model.adapters.items():
        for attr in ("w_res", "a", "s", "b", "w"):
            t = getattr(st, attr, None)
            if t is not None:
                tensors[f"adapter/{module}/{attr}"] = t.data
        rows = getattr(st, "trainable_rows", None)
        if rows is not None:
            trainable_rows[module] = rows
    for name, slot in result.optimizer.slots.items():
        tensors[f"opt/{name}/m"] = slot["m"]
        tensors[f"opt/{name}/v"] = slot["v"]
    meta = {
        "step": result.final_step,
        "adam_t": result.optimizer.t,
        "method": result.config.method,
        "config_hash": result.config.digest(),
        "trainable_rows": trainable_rows,
    }
    return tensors, meta
