"""Binary field files.

Layout, little-endian, no padding::

    offset 0   magic  b"ELFD"
    offset 4   u32    version (= 1)
    offset 8   u32    dimension d
    offset 12  u32    points per axis n
    offset 16  f64 * n^d  values, row-major (last axis fastest)
"""

from __future__ import annotations

import struct
from os import PathLike

import numpy as np

from .fields import Field, GridSpec

MAGIC = b"ELFD"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


class FieldDecodeError(ValueError):
    """Raised when a field file cannot be decoded; ``offset`` locates the fault."""

    def __init__(self, message: str, offset: int, path=None):
        self.offset = offset
        self.path = path
        where = f"{path}: " if path is not None else ""
        super().__init__(f"{where}{message} (at byte offset {offset})")


def encode_field(f: Field) -> bytes:
    header = _HEADER.pack(MAGIC, VERSION, f.grid.d, f.grid.n)
    return header + np.ascontiguousarray(f.values, dtype="<f8").tobytes()


def decode_field(buf: bytes, path=None) -> Field:
    if len(buf) < _HEADER.size:
        raise FieldDecodeError(f"truncated header: {len(buf)} of {_HEADER.size} bytes", len(buf), path)
    magic, version, d, n = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FieldDecodeError(f"bad magic {magic!r}, expected {MAGIC!r}", 0, path)
    if version != VERSION:
        raise FieldDecodeError(f"unsupported version {version}", 4, path)
    try:
        grid = GridSpec(d, n)
    except ValueError as exc:
        raise FieldDecodeError(str(exc), 8, path) from None
    expected = _HEADER.size + 8 * grid.size
    if len(buf) != expected:
        raise FieldDecodeError(
            f"payload length mismatch: file has {len(buf)} bytes, header implies {expected}",
            min(len(buf), expected),
            path,
        )
    values = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    try:
        return Field(grid, values.reshape(grid.shape))
    except ValueError as exc:
        raise FieldDecodeError(str(exc), _HEADER.size, path) from None


def field_write(f: Field, path: str | PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_field(f))


def field_read(path: str | PathLike) -> Field:
    with open(path, "rb") as fh:
        buf = fh.read()
    return decode_field(buf, path)
