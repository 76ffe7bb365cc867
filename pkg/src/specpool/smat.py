"""SMAT: a minimal binary container of named float64 matrices.

Layout (little-endian): ``b"SMAT"``, u32 version (1), u32 entry count, then
per entry u32 name length, UTF-8 name, u32 rows, u32 cols and
``rows * cols`` f64 values in row-major order.
"""
import os
import struct

import numpy as np

from .errors import BadMagic, DuplicateName, TruncatedPayload

MAGIC = b"SMAT"
VERSION = 1


def _entries(matrices):
    items = list(matrices.items()) if isinstance(matrices, dict) else list(matrices)
    seen = set()
    for name, _ in items:
        if name in seen:
            raise DuplicateName(f"duplicate entry name {name!r}")
        seen.add(name)
    return items


def encode_smat(matrices):
    items = _entries(matrices)
    parts = [MAGIC, struct.pack("<II", VERSION, len(items))]
    for name, arr in items:
        a = np.asarray(arr, dtype=np.float64)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        elif a.ndim == 1:
            a = a.reshape(-1, 1)
        elif a.ndim != 2:
            raise ValueError(f"entry {name!r} has {a.ndim} dimensions")
        if not np.all(np.isfinite(a)):
            raise ValueError(f"entry {name!r} has non-finite values")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw + struct.pack("<II", *a.shape))
        parts.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return b"".join(parts)


def write_smat(path, matrices):
    """Atomically write named matrices; 1-D arrays are stored as columns."""
    data = encode_smat(matrices)
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def decode_smat(data):
    if data[:4] != MAGIC:
        raise BadMagic(f"expected magic {MAGIC!r}, found {bytes(data[:4])!r}")
    if len(data) < 12:
        raise TruncatedPayload("header truncated")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise BadMagic(f"unsupported SMAT version {version}")
    pos = 12
    out = {}
    for _ in range(count):
        if pos + 4 > len(data):
            raise TruncatedPayload("entry header truncated")
        (nlen,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if pos + nlen + 8 > len(data):
            raise TruncatedPayload("entry name truncated")
        name = bytes(data[pos:pos + nlen]).decode("utf-8")
        pos += nlen
        rows, cols = struct.unpack_from("<II", data, pos)
        pos += 8
        size = rows * cols * 8
        if pos + size > len(data):
            raise TruncatedPayload(
                f"entry {name!r} declares {rows}x{cols} but only {(len(data) - pos) // 8} values remain")
        if name in out:
            raise DuplicateName(f"duplicate entry name {name!r}")
        out[name] = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=pos).reshape(rows, cols).copy()
        pos += size
    if pos != len(data):
        raise TruncatedPayload(f"{len(data) - pos} trailing bytes after the last entry")
    return out


def read_smat(path):
    with open(path, "rb") as fh:
        return decode_smat(fh.read())
