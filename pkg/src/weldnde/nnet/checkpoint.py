"""Versioned binary model container.

Layout (little-endian)::

    b"WNDEUNET"  u32 version  u32 config_len  config JSON (utf-8)
    u32 n_tensors
    repeated: u16 name_len, name, u8 ndim, u32 dims[ndim], float32 data
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .unet import UNetConfig, UNetModel

MAGIC = b"WNDEUNET"
VERSION = 1


def save_model(model: UNetModel, path: str | Path) -> None:
    cfg = json.dumps(model.state_config(), sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(cfg)), cfg,
             struct.pack("<I", len(model.params))]
    for name in sorted(model.params):
        arr = np.ascontiguousarray(model.params[name], dtype="<f4")
        key = name.encode("utf-8")
        parts.append(struct.pack("<H", len(key)) + key)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_model(path: str | Path) -> UNetModel:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a model checkpoint")
    version, clen = struct.unpack_from("<II", data, 8)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 16
    cfg = UNetConfig(**json.loads(data[pos:pos + clen].decode("utf-8")))
    pos += clen
    (n,) = struct.unpack_from("<I", data, pos)
    pos += 4
    params = {}
    for _ in range(n):
        (klen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + klen].decode("utf-8")
        pos += klen
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        params[name] = np.frombuffer(data, "<f4", count, pos).reshape(shape).astype(np.float32)
        pos += 4 * count
    return UNetModel(cfg, params)
