"""Versioned little-endian binary checkpoints.

Layout::

    b"AMPG" | u32 version | u32 count
    count x ( u32 name_len | utf-8 name | u32 ndim | u32 dims[ndim] | f32 values )
"""
from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .errors import AmpgradError

MAGIC = b"AMPG"
VERSION = 1
_U32 = struct.Struct("<I")


class CheckpointError(AmpgradError, ValueError):
    pass


def encode_arrays(arrays) -> bytes:
    parts = [MAGIC, _U32.pack(VERSION), _U32.pack(len(arrays))]
    for name, arr in arrays:
        raw = name.encode("utf-8")
        arr = np.asarray(arr)
        parts += [_U32.pack(len(raw)), raw, _U32.pack(arr.ndim)]
        parts += [_U32.pack(d) for d in arr.shape]
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_arrays(buf: bytes) -> dict:
    if buf[:4] != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic")
    pos = 4

    def u32():
        nonlocal pos
        if pos + 4 > len(buf):
            raise CheckpointError(f"truncated checkpoint at byte {pos}")
        (v,) = _U32.unpack_from(buf, pos)
        pos += 4
        return v

    version = u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    out = {}
    for _ in range(u32()):
        n = u32()
        name = buf[pos:pos + n].decode("utf-8")
        pos += n
        shape = tuple(u32() for _ in range(u32()))
        nbytes = 4 * int(np.prod(shape, dtype=np.int64))
        if pos + nbytes > len(buf):
            raise CheckpointError(f"truncated checkpoint in entry {name!r}")
        out[name] = np.frombuffer(buf, dtype="<f4", count=nbytes // 4, offset=pos).reshape(shape).copy()
        pos += nbytes
    if pos != len(buf):
        raise CheckpointError(f"{len(buf) - pos} trailing bytes after last entry")
    return out


def atomic_write_bytes(path, data: bytes) -> None:
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(model, path) -> None:
    atomic_write_bytes(path, encode_arrays(model.state_arrays()))


def read_checkpoint(path) -> dict:
    with open(path, "rb") as fh:
        return decode_arrays(fh.read())


def load_checkpoint(model, path) -> None:
    model.load_state_dict(read_checkpoint(path))
