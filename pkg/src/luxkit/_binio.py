"""Low-level helpers for the LUX* binary file family.

All formats share the same framing discipline: a 4-byte magic, a u32
little-endian format version, then format-specific fields.  Strings are
length-prefixed (u32 LE byte length + UTF-8 bytes).  Numeric payloads are
little-endian; float payloads round-trip bit-exactly.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

from .errors import FormatError

FORMAT_VERSION = 1

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


def read_exact(fh: BinaryIO, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file: expected {n} more bytes, got {len(buf)}")
    return buf


def write_magic_version(fh: BinaryIO, magic: bytes, version: int = FORMAT_VERSION) -> None:
    assert len(magic) == 4
    fh.write(magic)
    fh.write(_U32.pack(version))


def expect_magic_version(fh: BinaryIO, magic: bytes) -> int:
    got = fh.read(4)
    if got != magic:
        raise FormatError(f"unsupported format: expected magic {magic!r}, got {got!r}")
    version = read_u32(fh)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported {magic.decode('ascii')} version {version}")
    return version


def write_u32(fh: BinaryIO, value: int) -> None:
    fh.write(_U32.pack(value))


def read_u32(fh: BinaryIO) -> int:
    return _U32.unpack(read_exact(fh, 4))[0]


def write_u64(fh: BinaryIO, value: int) -> None:
    fh.write(_U64.pack(value))


def read_u64(fh: BinaryIO) -> int:
    return _U64.unpack(read_exact(fh, 8))[0]


def write_str(fh: BinaryIO, s: str) -> None:
    data = s.encode("utf-8")
    fh.write(_U32.pack(len(data)))
    fh.write(data)


def read_str(fh: BinaryIO) -> str:
    n = read_u32(fh)
    return read_exact(fh, n).decode("utf-8")


def write_f32_array(fh: BinaryIO, arr: np.ndarray) -> None:
    """Write a float32 array row-major, little-endian, bit-exact."""
    arr = np.ascontiguousarray(arr, dtype="<f4")
    fh.write(arr.tobytes())


def read_f32_array(fh: BinaryIO, shape: tuple[int, ...]) -> np.ndarray:
    count = int(np.prod(shape)) if shape else 1
    buf = read_exact(fh, 4 * count)
    return np.frombuffer(buf, dtype="<f4").reshape(shape).astype(np.float32, copy=True)
