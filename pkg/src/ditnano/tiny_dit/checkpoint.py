"""``DTCK`` checkpoint container.

Layout (little-endian)::

    b"DTCK" | version:u32
    config: depth, width, heads, patch_size, image_size, in_channels,
            num_classes, mlp_ratio (8 x u32)
    count:u32
    count x { name_len:u32 | name:utf-8 | rank:u32 | dims:u32[rank] | f32[prod(dims)] }

EMA shadow weights are stored alongside the live weights under the
``ema/`` name prefix.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..arch_plan import DitConfig
from ..errors import ConfigError, FormatError
from ..fileio import ByteReader, atomic_write_bytes
from .autograd import Tensor
from .model import EmaState, ModelState, param_specs

MAGIC = b"DTCK"
VERSION = 1
EMA_PREFIX = "ema/"
MAX_NAME = 1024
MAX_RANK = 8
# Sanity ceilings applied before a config record is trusted.
_CFG_LIMITS = {"depth": 4096, "width": 1 << 16, "heads": 1 << 16, "patch_size": 4096,
               "image_size": 4096, "in_channels": 64, "num_classes": 1 << 16, "mlp_ratio": 64}
_CFG_FIELDS = ("depth", "width", "heads", "patch_size", "image_size", "in_channels", "num_classes", "mlp_ratio")


@dataclass
class Checkpoint:
    cfg: DitConfig
    weights: dict[str, np.ndarray]
    ema: dict[str, np.ndarray] | None = None

    def model(self, dtype=np.float32, requires_grad: bool = True) -> ModelState:
        return ModelState(
            self.cfg, {k: Tensor(v.astype(dtype), requires_grad=requires_grad) for k, v in self.weights.items()}
        )

    def ema_model(self, dtype=np.float32) -> ModelState | None:
        if self.ema is None:
            return None
        return ModelState(self.cfg, {k: Tensor(v.astype(dtype)) for k, v in self.ema.items()})

    def ema_state(self, decay: float = 0.9999) -> EmaState | None:
        if self.ema is None:
            return None
        return EmaState({k: v.copy() for k, v in self.ema.items()}, decay)


def _pack_tensor(name: str, arr: np.ndarray) -> bytes:
    raw = name.encode("utf-8")
    arr = np.asarray(arr)
    return b"".join(
        [
            struct.pack("<I", len(raw)),
            raw,
            struct.pack("<I", arr.ndim),
            struct.pack(f"<{arr.ndim}I", *arr.shape),
            np.ascontiguousarray(arr, dtype="<f4").tobytes(),
        ]
    )


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    tensors = list(ckpt.weights.items())
    if ckpt.ema is not None:
        tensors += [(EMA_PREFIX + k, v) for k, v in ckpt.ema.items()]
    parts = [MAGIC, struct.pack("<I", VERSION)]
    parts.append(struct.pack("<8I", *(getattr(ckpt.cfg, f) for f in _CFG_FIELDS)))
    parts.append(struct.pack("<I", len(tensors)))
    parts.extend(_pack_tensor(k, v) for k, v in tensors)
    return b"".join(parts)


def decode_checkpoint(buf: bytes) -> Checkpoint:
    """Parse and validate a checkpoint; every defect raises :class:`FormatError`."""
    r = ByteReader(buf, "checkpoint")
    r.magic(MAGIC)
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    cfg_at = r.pos
    values = [r.u32(f) for f in _CFG_FIELDS]
    for f, v in zip(_CFG_FIELDS, values):
        if v > _CFG_LIMITS[f]:
            raise FormatError(f"config field {f}={v} exceeds {_CFG_LIMITS[f]}", offset=cfg_at)
    try:
        cfg = DitConfig(**dict(zip(_CFG_FIELDS, values)))
    except ConfigError as exc:
        raise FormatError(f"invalid config record: {exc}", offset=cfg_at) from None
    expected = {name: shape for name, shape, _ in param_specs(cfg)}
    count = r.u32("tensor count")
    if count > 2 * len(expected):
        raise FormatError(f"tensor count {count} exceeds {2 * len(expected)} for this config", offset=r.pos - 4)
    weights: dict[str, np.ndarray] = {}
    ema: dict[str, np.ndarray] = {}
    for _ in range(count):
        at = r.pos
        nlen = r.u32("name length")
        if nlen == 0 or nlen > MAX_NAME:
            raise FormatError(f"name length {nlen} out of range", offset=at)
        try:
            name = r.take(nlen, "tensor name").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("tensor name is not valid UTF-8", offset=at + 4) from None
        rank = r.u32("rank")
        if rank > MAX_RANK:
            raise FormatError(f"rank {rank} exceeds {MAX_RANK} for {name!r}", offset=r.pos - 4)
        dims = tuple(r.u32("dim") for _ in range(rank))
        is_ema = name.startswith(EMA_PREFIX)
        key = name[len(EMA_PREFIX):] if is_ema else name
        if key not in expected:
            raise FormatError(f"unexpected tensor {name!r}", offset=at)
        if dims != expected[key]:
            raise FormatError(f"tensor {name!r} has shape {dims}, expected {expected[key]}", offset=at)
        target = ema if is_ema else weights
        if key in target:
            raise FormatError(f"duplicate tensor {name!r}", offset=at)
        target[key] = r.f32_array(math.prod(dims), f"data of {name!r}").reshape(dims)
    if r.remaining:
        raise FormatError(f"{r.remaining} trailing bytes", offset=r.pos)
    if set(weights) != set(expected):
        missing = sorted(set(expected) - set(weights))
        raise FormatError(f"missing weights: {missing[:5]}", offset=r.pos)
    if ema and set(ema) != set(expected):
        missing = sorted(set(expected) - set(ema))
        raise FormatError(f"incomplete EMA shadow, missing {missing[:5]}", offset=r.pos)
    return Checkpoint(cfg, weights, ema or None)


def save_checkpoint(path: str | os.PathLike, model: ModelState, ema: EmaState | None = None) -> None:
    ckpt = Checkpoint(model.cfg, model.arrays(), None if ema is None else ema.shadow)
    atomic_write_bytes(path, encode_checkpoint(ckpt))


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())
