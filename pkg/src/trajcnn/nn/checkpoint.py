"""Binary parameter checkpoints.

Layout (all integers little-endian)::

    b"TCKP"  uint32 version  uint32 meta_len  meta (UTF-8 JSON)  uint32 n_records
    n_records x [uint16 name_len, name, uint8 ndim, ndim x uint32 dims, float32 data]

Buffers (e.g. batch-norm running statistics) are stored as records whose
name is prefixed with ``buffer:``.
"""
import json
import struct

import numpy as np

from ..errors import CheckpointError

MAGIC = b"TCKP"
VERSION = 1


def save_checkpoint(path, module, meta=None):
    records = [(name, p.data) for name, p in module.named_parameters()]
    records += [(f"buffer:{name}", b) for name, b in module.named_buffers()]
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(records)))
        for name, arr in records:
            raw = name.encode()
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_checkpoint(path):
    """Return ``(meta, {name: float32 array})``."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    version, meta_len = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise CheckpointError(f"checkpoint version {version} unsupported (expected {VERSION})")
    off = 12
    meta = json.loads(data[off:off + meta_len].decode())
    off += meta_len
    (n,) = struct.unpack_from("<I", data, off)
    off += 4
    arrays = {}
    for _ in range(n):
        (name_len,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + name_len].decode()
        off += name_len
        (ndim,) = struct.unpack_from("<B", data, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        size = int(np.prod(shape)) * 4
        arrays[name] = np.frombuffer(data[off:off + size], dtype="<f4").reshape(shape).copy()
        off += size
    return meta, arrays


def load_into(module, arrays):
    """Copy checkpoint arrays into ``module`` (shapes must match)."""
    for name, p in module.named_parameters():
        if name not in arrays:
            raise CheckpointError(f"checkpoint lacks parameter {name}")
        if arrays[name].shape != p.shape:
            raise CheckpointError(f"{name}: checkpoint shape {arrays[name].shape} vs model {p.shape}")
        p.data[...] = arrays[name]
    for name, b in module.named_buffers():
        key = f"buffer:{name}"
        if key in arrays:
            b[...] = arrays[key]
    return module
