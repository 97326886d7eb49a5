"""Teacher noise/image pairs: a synthetic generator and the ``DTP1`` file format.

``DTP1`` layout (little-endian, row-major)::

    b"DTP1" | version:u32 | count:u64 | H:u32 | W:u32 | C:u32
    count x { class:u16 | z:f32[C*H*W] | x:f32[C*H*W] }
"""

from __future__ import annotations

import hashlib
import io
import os
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from ..errors import FormatError, ShapeError
from ..fileio import atomic_write_bytes
from .metrics import reflect_index

MAGIC = b"DTP1"
VERSION = 1
HEADER = struct.Struct("<4sIQIII")
MAX_SIDE = 4096
MAX_CHANNELS = 64


@dataclass
class TeacherPair:
    z: np.ndarray
    c: int
    x: np.ndarray

    def __post_init__(self):
        if self.z.shape != self.x.shape:
            raise ShapeError(f"noise {self.z.shape} and image {self.x.shape} differ")

    def __eq__(self, other) -> bool:
        if not isinstance(other, TeacherPair):
            return NotImplemented
        return self.c == other.c and np.array_equal(self.z, other.z) and np.array_equal(self.x, other.x)


def stack_pairs(pairs: Iterable[TeacherPair]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pairs = list(pairs)
    z = np.stack([p.z for p in pairs])
    c = np.array([p.c for p in pairs], dtype=np.int64)
    x = np.stack([p.x for p in pairs])
    return z, c, x


# ------------------------------------------------------------------ synthetic
_TAPS = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


@lru_cache(maxsize=16)
def _blur_matrix(n: int) -> np.ndarray:
    """[n, n] 1-D binomial smoothing with reflected borders."""
    out = np.zeros((n, n))
    for r in range(n):
        for k, wgt in zip(range(-2, 3), _TAPS):
            out[r, reflect_index(r + k, n)] += wgt
    return out


def blur(img: np.ndarray) -> np.ndarray:
    """5x5 binomial smoothing (separable) over the last two axes."""
    h, w = img.shape[-2:]
    return _blur_matrix(h) @ img @ _blur_matrix(w).T


def class_mixing(c: int, channels: int) -> np.ndarray:
    """Per-class channel mixing ``3 * (I + 0.5 * R)``.

    ``R`` is uniform on [-1, 1], drawn from a generator seeded by the first
    eight bytes of ``sha256(b"ditnano/class-mix/{c}/{channels}")``.
    """
    digest = hashlib.sha256(f"ditnano/class-mix/{c}/{channels}".encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    r = rng.uniform(-1.0, 1.0, size=(channels, channels))
    return 3.0 * (np.eye(channels) + 0.5 * r)


_OPEN_UNIT = float(np.nextafter(np.float32(1.0), np.float32(0.0)))


def synth_pair(seed: int, index: int, image_size: int, in_channels: int = 3, num_classes: int = 10) -> TeacherPair:
    """Pair ``index`` of stream ``seed``: ``x = tanh(M_c . blur(blur(z)))``."""
    rng = np.random.default_rng([seed, index])
    c = int(rng.integers(num_classes))
    z = rng.standard_normal((in_channels, image_size, image_size))
    smooth = blur(blur(z))
    mixed = np.einsum("ij,jhw->ihw", class_mixing(c, in_channels), smooth)
    x = np.clip(np.tanh(mixed), -_OPEN_UNIT, _OPEN_UNIT)
    return TeacherPair(z.astype(np.float32), c, x.astype(np.float32))


def synth_teacher(
    n: int, seed: int = 0, image_size: int = 8, in_channels: int = 3, num_classes: int = 10
) -> Iterator[TeacherPair]:
    """Deterministic stream of ``n`` synthetic teacher pairs."""
    if n < 1:
        raise ValueError(f"need at least one pair, got {n}")
    if num_classes < 1:
        raise ValueError("synthetic pairs need at least one class")
    for i in range(n):
        yield synth_pair(seed, i, image_size, in_channels, num_classes)


# ------------------------------------------------------------------- DTP1 I/O
def encode_teacher_pairs(pairs: Iterable[TeacherPair]) -> bytes:
    pairs = list(pairs)
    if not pairs:
        raise ValueError("cannot write an empty pair file")
    c_, h, w = pairs[0].z.shape
    body = io.BytesIO()
    for p in pairs:
        if p.z.shape != (c_, h, w):
            raise ShapeError(f"pair shape {p.z.shape} differs from {(c_, h, w)}")
        if not 0 <= p.c < 1 << 16:
            raise ValueError(f"class id {p.c} does not fit in u16")
        body.write(struct.pack("<H", p.c))
        body.write(np.ascontiguousarray(p.z, dtype="<f4").tobytes())
        body.write(np.ascontiguousarray(p.x, dtype="<f4").tobytes())
    return HEADER.pack(MAGIC, VERSION, len(pairs), h, w, c_) + body.getvalue()


def write_teacher_pairs(path: str | os.PathLike, pairs: Iterable[TeacherPair]) -> int:
    data = encode_teacher_pairs(pairs)
    atomic_write_bytes(path, data)
    return HEADER.unpack_from(data)[2]


class TeacherPairReader:
    """Lazily streams records of a ``DTP1`` file.

    The header and the file length are validated on construction, so a
    truncated file or a count mismatch fails before any record is yielded.
    """

    def __init__(self, source: str | os.PathLike | bytes, num_classes: int | None = None):
        if isinstance(source, (bytes, bytearray)):
            self._open = lambda: io.BytesIO(source)
            size = len(source)
            self.name = "<bytes>"
        else:
            path = Path(source)
            self._open = lambda: open(path, "rb")
            size = path.stat().st_size
            self.name = str(path)
        with self._open() as fh:
            head = fh.read(HEADER.size)
        if len(head) < 4 or head[:4] != MAGIC:
            raise FormatError(f"bad magic in {self.name}: expected {MAGIC!r}, got {head[:4]!r}", offset=0)
        if len(head) < HEADER.size:
            raise FormatError(
                f"truncated header in {self.name}: {len(head)} of {HEADER.size} bytes", offset=len(head)
            )
        _, version, count, h, w, c = HEADER.unpack(head)
        if version != VERSION:
            raise FormatError(f"unsupported DTP1 version {version}", offset=4)
        if not (0 < h <= MAX_SIDE and 0 < w <= MAX_SIDE and 0 < c <= MAX_CHANNELS):
            raise FormatError(f"implausible geometry H={h} W={w} C={c}", offset=16)
        self.count, self.shape = count, (c, h, w)
        self.num_classes = num_classes
        self._floats = c * h * w
        self.record_size = 2 + 8 * self._floats
        body = size - HEADER.size
        whole, partial = divmod(body, self.record_size)
        if partial:
            raise FormatError(
                f"truncated record {whole} in {self.name}: {partial} of {self.record_size} bytes",
                offset=HEADER.size + whole * self.record_size,
            )
        if whole != count:
            raise FormatError(
                f"header declares {count} records but {self.name} holds {whole}",
                offset=8,
            )

    def __len__(self) -> int:
        return self.count

    def __iter__(self) -> Iterator[TeacherPair]:
        n = self._floats
        with self._open() as fh:
            fh.seek(HEADER.size)
            for i in range(self.count):
                at = HEADER.size + i * self.record_size
                rec = fh.read(self.record_size)
                if len(rec) != self.record_size:
                    raise FormatError(f"file shrank while reading record {i}", offset=at)
                cls = struct.unpack_from("<H", rec)[0]
                if self.num_classes is not None and cls >= self.num_classes:
                    raise FormatError(f"record {i} has class {cls} >= {self.num_classes}", offset=at)
                z = np.frombuffer(rec, dtype="<f4", count=n, offset=2).astype(np.float32).reshape(self.shape)
                x = np.frombuffer(rec, dtype="<f4", count=n, offset=2 + 4 * n).astype(np.float32).reshape(self.shape)
                yield TeacherPair(z, int(cls), x)


def load_teacher_pairs(path: str | os.PathLike, num_classes: int | None = None) -> TeacherPairReader:
    return TeacherPairReader(path, num_classes=num_classes)
