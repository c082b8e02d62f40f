"""FMAP writer/reader: the tensor exchange format consumed by the scorer.

Layout (little-endian, no padding): magic "FMAP", u32 version (1), u32 ndims,
ndims x u32 dims in (C, H, W) order, then prod(dims) float32 values,
channel-major then row-major.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

MAGIC = b"FMAP"
VERSION = 1


def write_fmap(path, data: np.ndarray) -> None:
    """Write a (C, H, W) tensor atomically (temp file + rename)."""
    arr = np.ascontiguousarray(data, dtype=np.float32)
    if arr.ndim != 3:
        raise ValueError(f"FMAP tensors are 3-D (C, H, W), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("refusing to write non-finite FMAP payload")
    path = str(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".fmap.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<II", VERSION, arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_fmap(path) -> np.ndarray:
    """Read back an FMAP file (used for self-checks after export)."""
    with open(str(path), "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise ValueError(f"bad magic in {path}")
    version, ndims = struct.unpack_from("<II", raw, 4)
    if version != VERSION or ndims != 3:
        raise ValueError(f"bad version/ndims in {path}: {version}/{ndims}")
    dims = struct.unpack_from(f"<{ndims}I", raw, 12)
    count = int(np.prod(dims, dtype=np.int64))
    offset = 12 + 4 * ndims
    if len(raw) < offset + 4 * count:
        raise ValueError(f"truncated file: {path}")
    return np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(dims).copy()
