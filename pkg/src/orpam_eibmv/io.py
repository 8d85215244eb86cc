"""Flat little-endian volume files (``.orpa``).

Layout: a 35-byte header followed by the samples. The header is
``magic "ORPA" | version u16 | nx u32 | ny u32 | nt u32 | fs f64 | pitch f64 | dtype u8``.
Samples are stored A-scan-major with x varying fastest, then y, and time
contiguous innermost. dtype 0 is float32, 1 is float64, both little-endian.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .pipeline import Volume

MAGIC = b"ORPA"
VERSION = 1
HEADER = struct.Struct("<4sHIIIddB")
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
DTYPE_CODES = {"float32": 0, "float64": 1}


class VolumeFormatError(ValueError):
    pass


def encode_volume(v: Volume, dtype: str = "float32") -> bytes:
    if dtype not in DTYPE_CODES:
        raise ValueError(f"dtype must be one of {sorted(DTYPE_CODES)}, got {dtype!r}")
    code = DTYPE_CODES[dtype]
    nx, ny, nt = v.dims
    header = HEADER.pack(MAGIC, VERSION, nx, ny, nt, float(v.fs), float(v.pitch), code)
    # (nx, ny, nt) -> (ny, nx, nt) so x runs fastest across A-scans
    payload = np.ascontiguousarray(v.data.transpose(1, 0, 2), dtype=DTYPES[code])
    return header + payload.tobytes()


def decode_volume(buf: bytes) -> Volume:
    if len(buf) < HEADER.size:
        raise VolumeFormatError(f"file too short for a header ({len(buf)} bytes)")
    magic, version, nx, ny, nt, fs, pitch, code = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise VolumeFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise VolumeFormatError(f"unsupported version {version}")
    if code not in DTYPES:
        raise VolumeFormatError(f"unknown dtype code {code}")
    dt = DTYPES[code]
    expected = nx * ny * nt * dt.itemsize
    if len(buf) - HEADER.size != expected:
        raise VolumeFormatError(f"payload is {len(buf) - HEADER.size} bytes, header implies {expected}")
    data = np.frombuffer(buf, dtype=dt, offset=HEADER.size).reshape(ny, nx, nt).transpose(1, 0, 2)
    return Volume(data.astype(float), fs, pitch)


def write_volume(path, v: Volume, dtype: str = "float32") -> None:
    Path(path).write_bytes(encode_volume(v, dtype))


def read_volume(path) -> Volume:
    return decode_volume(Path(path).read_bytes())


def read_dtype(path) -> str:
    """Name of the sample type stored in a volume file."""
    with open(path, "rb") as f:
        head = f.read(HEADER.size)
    if len(head) < HEADER.size:
        raise VolumeFormatError("file too short for a header")
    code = HEADER.unpack(head)[-1]
    return {v: k for k, v in DTYPE_CODES.items()}.get(code, "unknown")
