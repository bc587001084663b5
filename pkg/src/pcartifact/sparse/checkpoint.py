"""Binary checkpoint container.

Byte layout (all integers little-endian)::

    magic        8 bytes   b"PCARTCKP"
    version      uint32    currently 1
    config_len   uint32    length of the UTF-8 JSON config that follows
    config       bytes
    n_tensors    uint32
    repeated n_tensors times:
        name_len uint16, name (UTF-8)
        ndim     uint8,  dims (uint32 x ndim)
        payload  float64 x prod(dims), row-major
"""

from __future__ import annotations

import io
import json
import struct

import numpy as np

from ..cloud import _atomic_write_bytes

__all__ = ["CheckpointError", "MAGIC", "VERSION", "dumps", "loads", "read_checkpoint", "write_checkpoint"]

MAGIC = b"PCARTCKP"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(config: dict, tensors: dict[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    cfg = json.dumps(config, sort_keys=True).encode("utf-8")
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(cfg)))
    buf.write(cfg)
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        nb = name.encode("utf-8")
        buf.write(struct.pack("<H", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


def loads(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError(f"truncated checkpoint at byte {pos}")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(8)) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, cfg_len = struct.unpack("<II", take(8))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    config = json.loads(bytes(take(cfg_len)).decode("utf-8"))
    (count,) = struct.unpack("<I", take(4))
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = bytes(take(nlen)).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        tensors[name] = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
    if pos != len(view):
        raise CheckpointError(f"{len(view) - pos} trailing bytes after last tensor")
    return config, tensors


def write_checkpoint(path, config: dict, tensors: dict[str, np.ndarray]) -> None:
    _atomic_write_bytes(path, [dumps(config, tensors)])


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        return loads(f.read())
