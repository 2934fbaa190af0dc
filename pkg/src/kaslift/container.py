"""Binary tensor container shared by checkpoints and clip files.

Layout (all integers unsigned 32-bit little-endian)::

    b"KASF" | version | tensor count
    per tensor: name length | UTF-8 name | rank | dims... | float32 LE values

Values are always stored as 32-bit floats, so a load reproduces the
stored tensors to single precision and save/load/save is byte-identical.
"""

from __future__ import annotations

import struct
from collections.abc import Mapping
from pathlib import Path

import numpy as np

MAGIC = b"KASF"
VERSION = 1

_U32 = struct.Struct("<I")


class ContainerError(ValueError):
    """Base class for malformed container files."""


class BadMagicError(ContainerError):
    pass


class TruncatedFileError(ContainerError):
    pass


class DuplicateNameError(ContainerError):
    pass


class UnsupportedVersionError(ContainerError):
    pass


def encode(tensors: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, _U32.pack(VERSION), _U32.pack(len(tensors))]
    for name, value in tensors.items():
        arr = np.asarray(value)
        raw = name.encode("utf-8")
        parts.append(_U32.pack(len(raw)))
        parts.append(raw)
        parts.append(_U32.pack(arr.ndim))
        for dim in arr.shape:
            parts.append(_U32.pack(dim))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def decode(blob: bytes) -> dict[str, np.ndarray]:
    """Parse a container, returning float32 arrays in file order."""
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise TruncatedFileError(
                f"truncated container: need {n} bytes for {what} at offset {pos}, "
                f"file has {len(blob)}"
            )
        out = blob[pos:pos + n]
        pos += n
        return out

    def u32(what: str) -> int:
        return _U32.unpack(take(4, what))[0]

    if len(blob) < 4 or blob[:4] != MAGIC:
        raise BadMagicError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    pos = 4
    version = u32("version")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported container version {version}")
    count = u32("tensor count")
    out: dict[str, np.ndarray] = {}
    for k in range(count):
        name = take(u32(f"name length of tensor {k}"), f"name of tensor {k}").decode("utf-8")
        if name in out:
            raise DuplicateNameError(f"duplicate tensor name {name!r}")
        rank = u32(f"rank of {name!r}")
        shape = tuple(u32(f"dim {i} of {name!r}") for i in range(rank))
        n = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(take(4 * n, f"values of {name!r}"), dtype="<f4")
        out[name] = values.reshape(shape).astype(np.float32)
    if pos != len(blob):
        raise ContainerError(f"{len(blob) - pos} trailing bytes after last tensor")
    return out


def write(path: str | Path, tensors: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(encode(tensors))


def read(path: str | Path) -> dict[str, np.ndarray]:
    return decode(Path(path).read_bytes())
