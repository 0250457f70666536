"""Flat binary file of named float64 tensors.

Layout (little endian)::

    magic   b"SQTRNSR\\0"                 8 bytes
    version uint32                        currently 1
    meta    uint32 length + UTF-8 JSON    free-form metadata
    count   uint32
    count x { uint16 name length, UTF-8 name,
              uint8 ndim, ndim x uint64 dims,
              prod(dims) x float64 row-major data }

Tensors are written sorted by name so identical contents give identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Dict, Mapping, Tuple

import numpy as np

from ..numerics import ContractError

MAGIC = b"SQTRNSR\0"
VERSION = 1


def save_tensors(path, tensors: Mapping[str, np.ndarray], meta: Mapping = None) -> None:
    buf = bytearray(MAGIC)
    buf += struct.pack("<I", VERSION)
    blob = json.dumps(dict(meta or {}), sort_keys=True, ensure_ascii=False).encode("utf-8")
    buf += struct.pack("<I", len(blob)) + blob
    buf += struct.pack("<I", len(tensors))
    for name in sorted(tensors):
        arr = np.asarray(tensors[name], dtype="<f8", order="C")  # keeps 0-d shapes
        raw = name.encode("utf-8")
        buf += struct.pack("<H", len(raw)) + raw
        buf += struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
        buf += arr.tobytes()
    Path(path).write_bytes(bytes(buf))


def load_tensors(path) -> Tuple[Dict[str, np.ndarray], dict]:
    data = Path(path).read_bytes()
    try:
        return _parse(path, data)
    except struct.error as err:
        raise ContractError(f"{path}: truncated file") from err


def _parse(path, data: bytes):
    if data[:8] != MAGIC:
        raise ContractError(f"{path}: not a tensor file")
    (version,) = struct.unpack_from("<I", data, 8)
    if version != VERSION:
        raise ContractError(f"{path}: unsupported version {version}")
    pos = 12
    (n,) = struct.unpack_from("<I", data, pos)
    pos += 4
    meta = json.loads(data[pos : pos + n].decode("utf-8"))
    pos += n
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    out = {}
    for _ in range(count):
        (ln,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos : pos + ln].decode("utf-8")
        pos += ln
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}Q", data, pos)
        pos += 8 * ndim
        size = int(np.prod(shape, dtype=np.int64))
        if pos + 8 * size > len(data):
            raise ContractError(f"{path}: truncated tensor {name!r}")
        out[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape).copy()
        pos += 8 * size
    if pos != len(data):
        raise ContractError(f"{path}: trailing bytes")
    return out, meta
