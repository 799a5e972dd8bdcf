"""Binary named-tensor container used for every model and d-vector file.

Layout (all integers little-endian)::

    b"VCKP1"  u32 version  u16 len + kind tag  u32 tensor count
    per tensor: u16 len + name, u32 rank, rank * u32 dims, float32 data
    u32 CRC32 of every preceding byte
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"VCKP1"
VERSION = 1


class CheckpointError(ValueError):
    pass


class BadMagicError(CheckpointError):
    pass


class CRCError(CheckpointError):
    pass


class KindMismatchError(CheckpointError):
    pass


def _name_bytes(s: str) -> bytes:
    b = s.encode("utf-8")
    if len(b) > 0xFFFF:
        raise CheckpointError(f"name too long: {s[:40]}...")
    return struct.pack("<H", len(b)) + b


def encode_checkpoint(kind: str, tensors) -> bytes:
    items = list(tensors.items()) if isinstance(tensors, dict) else list(tensors)
    names = [n for n, _ in items]
    if len(set(names)) != len(names):
        raise CheckpointError("duplicate tensor names")
    parts = [MAGIC, struct.pack("<I", VERSION), _name_bytes(kind), struct.pack("<I", len(items))]
    for name, value in items:
        arr = np.asarray(value, dtype="<f4")  # tobytes() is C-order; keeps rank 0
        parts.append(_name_bytes(name))
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode_checkpoint(data: bytes):
    """Parse container bytes into ``(kind, {name: float32 array})``."""
    if not data.startswith(MAGIC):
        raise BadMagicError("bad magic: not a VCKP1 checkpoint")
    if len(data) < len(MAGIC) + 4 + 2 + 4 + 4:
        raise CheckpointError("truncated checkpoint")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CRCError("CRC mismatch: checkpoint is corrupted")
    pos = len(MAGIC)

    def take(n):
        nonlocal pos
        if pos + n > len(body):
            raise CheckpointError("truncated checkpoint")
        chunk = body[pos : pos + n]
        pos += n
        return chunk

    def take_name():
        (n,) = struct.unpack("<H", take(2))
        return take(n).decode("utf-8")

    (version,) = struct.unpack("<I", take(4))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    kind = take_name()
    (count,) = struct.unpack("<I", take(4))
    tensors = {}
    for _ in range(count):
        name = take_name()
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(take(4 * size), dtype="<f4").reshape(dims)
        if name in tensors:
            raise CheckpointError(f"duplicate tensor name {name!r}")
        tensors[name] = arr.copy()
    if pos != len(body):
        raise CheckpointError("trailing bytes after tensor list")
    return kind, tensors


def save_checkpoint(path, kind: str, tensors) -> None:
    Path(path).write_bytes(encode_checkpoint(kind, tensors))


def load_checkpoint(path, expected_kind: str | None = None):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    kind, tensors = decode_checkpoint(path.read_bytes())
    if expected_kind is not None and kind != expected_kind:
        raise KindMismatchError(f"{path}: expected a {expected_kind} checkpoint, found {kind}")
    return kind, tensors
