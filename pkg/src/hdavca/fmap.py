"""FMAP: the binary tensor exchange format for feature maps and disparity.

Layout (all little-endian, no padding): magic "FMAP", u32 version (1),
u32 ndims, ndims x u32 dims in (C, H, W) order, then prod(dims) float32
values, channel-major then row-major.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

MAGIC = b"FMAP"
VERSION = 1


def write_fmap(path, data: np.ndarray) -> None:
    """Write a (C, H, W) float tensor atomically (temp file + rename)."""
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim != 3:
        raise ValueError(f"FMAP tensors are 3-D (C, H, W), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("refusing to write non-finite FMAP payload")
    payload = struct.pack("<II", VERSION, arr.ndim)
    payload += struct.pack(f"<{arr.ndim}I", *arr.shape)
    path = str(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".fmap.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(payload)
            fh.write(arr.tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_fmap(path) -> np.ndarray:
    """Read an FMAP file into a float32 (C, H, W) array, validating strictly."""
    path = str(path)
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ValueError(f"unreadable file: {path}") from exc

    if len(raw) < 12:
        raise ValueError(f"truncated file: {path}")
    if raw[:4] != MAGIC:
        raise ValueError(f"bad magic in {path}: {raw[:4]!r}")
    version, ndims = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise ValueError(f"bad version in {path}: {version}")
    if ndims != 3:
        raise ValueError(f"unsupported ndims in {path}: {ndims}")
    header_end = 12 + 4 * ndims
    if len(raw) < header_end:
        raise ValueError(f"truncated file: {path}")
    dims = struct.unpack_from(f"<{ndims}I", raw, 12)
    count = int(np.prod(dims, dtype=np.int64))
    if count <= 0:
        raise ValueError(f"empty tensor in {path}: dims {dims}")
    if len(raw) < header_end + 4 * count:
        raise ValueError(f"truncated file: {path}")
    data = np.frombuffer(raw, dtype="<f4", count=count, offset=header_end).reshape(dims)
    if not np.all(np.isfinite(data)):
        raise ValueError(f"non-finite values in {path}")
    return data.copy()
