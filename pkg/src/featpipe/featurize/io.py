"""FMAP: bit-exact binary container for dense feature/attention rasters.

Layout, all little-endian:

    magic "FMAP" | u32 version=1 | u32 h | u32 w | u32 d | u8 dtype | 3 pad
    | row-major payload | optional [u64 length | provenance JSON]

dtype 0 = float32, 1 = float16. Attention maps are stored with d = 1.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"FMAP"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIB3x")
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f2")}
_CODES = {np.dtype("float32"): 0, np.dtype("float16"): 1}


class FmapFormatError(ValueError):
    """Raised for malformed or truncated FMAP files."""


def write_fmap(path: str | Path, data: np.ndarray, provenance: dict | None = None) -> None:
    """Atomically write a (h, w, d) float32/float16 raster; 2-d means d=1."""
    path = Path(path)
    data = np.asarray(data)
    if data.ndim == 2:
        data = data[:, :, None]
    if data.ndim != 3:
        raise ValueError(f"expected (h, w, d) raster, got shape {data.shape}")
    if data.dtype not in _CODES:
        data = data.astype(np.float32)
    h, w, d = data.shape
    header = _HEADER.pack(MAGIC, VERSION, h, w, d, _CODES[data.dtype])
    payload = np.ascontiguousarray(data, dtype=data.dtype.newbyteorder("<")).tobytes()

    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            fh.write(payload)
            if provenance is not None:
                blob = json.dumps(provenance, sort_keys=True).encode("utf-8")
                fh.write(struct.pack("<Q", len(blob)))
                fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_fmap(path: str | Path) -> tuple[np.ndarray, dict | None]:
    """Read an FMAP file back bit-exactly; returns (data, provenance or None)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FmapFormatError(f"{path}: truncated header")
    magic, version, h, w, d, code = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FmapFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FmapFormatError(f"{path}: unsupported version {version}")
    if code not in _DTYPES:
        raise FmapFormatError(f"{path}: unknown dtype code {code}")
    dt = _DTYPES[code]
    n = h * w * d * dt.itemsize
    start = _HEADER.size
    if len(raw) < start + n:
        raise FmapFormatError(f"{path}: truncated payload")
    data = np.frombuffer(raw[start : start + n], dtype=dt).reshape(h, w, d)

    provenance = None
    rest = raw[start + n :]
    if rest:
        if len(rest) < 8:
            raise FmapFormatError(f"{path}: truncated provenance length")
        (blob_len,) = struct.unpack_from("<Q", rest)
        blob = rest[8 : 8 + blob_len]
        if len(blob) != blob_len:
            raise FmapFormatError(f"{path}: truncated provenance block")
        provenance = json.loads(blob.decode("utf-8"))
    return data.copy(), provenance
