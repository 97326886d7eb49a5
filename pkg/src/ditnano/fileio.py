"""Atomic file writes and the single-tensor ``TNSR`` container.

TNSR layout (little-endian)::

    b"TNSR" | rank:u32 | dims:u32[rank] | data:f32[prod(dims)]
"""

from __future__ import annotations

import math
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError

TNSR_MAGIC = b"TNSR"
MAX_RANK = 8


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    """Write ``data`` to ``path`` through a sibling temp file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        # mkstemp creates 0600; give the result ordinary permissions
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


class ByteReader:
    """Bounds-checked cursor over an in-memory buffer.

    Every read that would run past the end raises :class:`FormatError`
    carrying the offset at which the short read started.
    """

    def __init__(self, buf: bytes, what: str = "file"):
        self.buf = buf
        self.pos = 0
        self.what = what

    @property
    def remaining(self) -> int:
        return len(self.buf) - self.pos

    def take(self, n: int, field: str) -> bytes:
        if n < 0 or n > self.remaining:
            raise FormatError(
                f"truncated {self.what}: need {n} bytes for {field}, "
                f"{self.remaining} available",
                offset=self.pos,
            )
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u16(self, field: str) -> int:
        return struct.unpack("<H", self.take(2, field))[0]

    def u32(self, field: str) -> int:
        return struct.unpack("<I", self.take(4, field))[0]

    def u64(self, field: str) -> int:
        return struct.unpack("<Q", self.take(8, field))[0]

    def f32_array(self, count: int, field: str) -> np.ndarray:
        raw = self.take(4 * count, field)
        return np.frombuffer(raw, dtype="<f4").astype(np.float32)

    def magic(self, expected: bytes) -> None:
        start = self.pos
        got = self.take(len(expected), "magic")
        if got != expected:
            raise FormatError(
                f"bad magic in {self.what}: expected {expected!r}, got {got!r}",
                offset=start,
            )


def encode_tensor(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.ndim > MAX_RANK:
        raise ValueError(f"rank {arr.ndim} exceeds {MAX_RANK}")
    parts = [TNSR_MAGIC, struct.pack("<I", arr.ndim)]
    parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
    parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_tensor(buf: bytes) -> np.ndarray:
    r = ByteReader(buf, "TNSR file")
    r.magic(TNSR_MAGIC)
    rank = r.u32("rank")
    if rank > MAX_RANK:
        raise FormatError(f"rank {rank} exceeds {MAX_RANK}", offset=4)
    dims = [r.u32(f"dim {i}") for i in range(rank)]
    count = math.prod(dims)
    data = r.f32_array(count, "tensor data")
    if r.remaining:
        raise FormatError(f"{r.remaining} trailing bytes after tensor data", offset=r.pos)
    return data.reshape(dims)


def write_tensor(path: str | os.PathLike, arr: np.ndarray) -> None:
    atomic_write_bytes(path, encode_tensor(arr))


def read_tensor(path: str | os.PathLike) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())
