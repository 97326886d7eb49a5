"""Differentiable image distances.

``pyramid`` is the default stand-in for a perceptual loss: the squared error
summed over the levels of a Gaussian pyramid (binomial [1, 4, 6, 4, 1]/16
blur with reflected borders, then stride-2 subsampling). ``external`` loads a
fixed per-pixel feature extractor from an ``.npz`` file and compares
unit-normalized features with non-negative channel weights, in the manner
of LPIPS.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from ..errors import ConfigError, ShapeError
from ..tiny_dit.autograd import Tensor, as_tensor

KINDS = ("l1", "l2", "pyramid", "external")
_BINOMIAL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def reflect_index(i: int, n: int) -> int:
    """Mirror ``i`` into ``[0, n)`` without repeating the edge sample."""
    if n == 1:
        return 0
    period = 2 * (n - 1)
    i = abs(i) % period
    return period - i if i >= n else i


@lru_cache(maxsize=64)
def downsample_matrix(n: int) -> np.ndarray:
    """[ceil(n/2), n] operator: binomial blur then keep every second sample."""
    out = np.zeros(((n + 1) // 2, n))
    for r in range(out.shape[0]):
        centre = 2 * r
        for k, wgt in zip(range(-2, 3), _BINOMIAL):
            out[r, reflect_index(centre + k, n)] += wgt
    out.setflags(write=False)
    return out


def pyramid_levels(x: Tensor, scales: int) -> list[Tensor]:
    """Levels 0..scales-1 of the pyramid over the last two axes."""
    levels = [x]
    for _ in range(scales - 1):
        cur = levels[-1]
        h, w = cur.shape[-2:]
        if h < 2 and w < 2:
            break
        dh = Tensor(downsample_matrix(h).astype(cur.dtype))
        dw = Tensor(downsample_matrix(w).T.astype(cur.dtype))
        levels.append(dh @ cur @ dw)
    return levels


@dataclass
class ExternalFeatures:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    channel_weights: list[np.ndarray]
    eps: float = 1e-10

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExternalFeatures":
        try:
            with np.load(Path(path)) as npz:
                n = sum(1 for k in npz.files if k.startswith("w"))
                ws = [np.asarray(npz[f"w{i}"], dtype=np.float64) for i in range(n)]
                bs = [np.asarray(npz[f"b{i}"], dtype=np.float64) for i in range(n)]
                ls = [np.asarray(npz[f"lin{i}"], dtype=np.float64) for i in range(n)]
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot read feature weights from {path}: {exc}") from None
        feats = cls(ws, bs, ls)
        feats.validate()
        return feats

    def save(self, path: str | os.PathLike) -> None:
        arrays = {}
        for i, (w, b, l) in enumerate(zip(self.weights, self.biases, self.channel_weights)):
            arrays[f"w{i}"], arrays[f"b{i}"], arrays[f"lin{i}"] = w, b, l
        np.savez(Path(path), **arrays)

    def validate(self) -> None:
        if not self.weights:
            raise ConfigError("feature extractor has no layers")
        prev = self.weights[0].shape[0]
        for i, (w, b, l) in enumerate(zip(self.weights, self.biases, self.channel_weights)):
            if w.ndim != 2 or w.shape[0] != prev or b.shape != (w.shape[1],) or l.shape != (w.shape[1],):
                raise ConfigError(f"feature layer {i} has inconsistent shapes")
            if (l < 0).any():
                raise ConfigError(f"feature layer {i} has negative channel weights")
            prev = w.shape[1]

    def features(self, x: Tensor) -> list[Tensor]:
        h = x.transpose(0, 2, 3, 1)
        out = []
        for w, b in zip(self.weights, self.biases):
            h = (h @ Tensor(w.astype(x.dtype)) + Tensor(b.astype(x.dtype))).tanh()
            norm = ((h * h).sum(axis=-1, keepdims=True) + self.eps).sqrt()
            out.append(h / norm)
        return out


@dataclass
class DistanceMetric:
    kind: str = "pyramid"
    scales: int = 3
    path: str | None = None
    _external: ExternalFeatures | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.kind not in KINDS:
            raise ConfigError(f"unknown metric {self.kind!r}; choose from {KINDS}")
        if self.kind == "pyramid" and self.scales < 1:
            raise ConfigError("pyramid metric needs at least one scale")
        if self.kind == "external":
            if self.path is None:
                raise ConfigError("external metric needs a weights file")
            if self._external is None:
                self._external = ExternalFeatures.load(self.path)

    @classmethod
    def parse(cls, text: str) -> "DistanceMetric":
        """``l1``, ``l2``, ``pyramid``, ``pyramid:S`` or ``external:PATH``."""
        kind, _, arg = text.partition(":")
        kind = kind.lower()
        if kind == "pyramid":
            return cls("pyramid", scales=int(arg) if arg else 3)
        if kind == "external":
            return cls("external", path=arg or None)
        return cls(kind)

    def __str__(self) -> str:
        if self.kind == "pyramid":
            return f"pyramid:{self.scales}"
        if self.kind == "external":
            return f"external:{self.path}"
        return self.kind

    def __call__(self, a, b) -> Tensor:
        """Mean distance over the batch between image tensors [B, C, H, W]."""
        a = as_tensor(a)
        b = b if isinstance(b, Tensor) else Tensor(np.asarray(b, dtype=a.dtype))
        if a.shape != b.shape:
            raise ShapeError(f"cannot compare shapes {a.shape} and {b.shape}")
        if self.kind == "l1":
            return (a - b).abs().mean()
        if self.kind == "l2":
            return (a - b).square().mean()
        if self.kind == "pyramid":
            total = None
            for la, lb in zip(pyramid_levels(a, self.scales), pyramid_levels(b, self.scales)):
                term = (la - lb).square().mean()
                total = term if total is None else total + term
            return total
        return self._external_distance(a, b)

    def _external_distance(self, a: Tensor, b: Tensor) -> Tensor:
        if a.ndim == 3:
            a, b = a.reshape(1, *a.shape), b.reshape(1, *b.shape)
        total = None
        for fa, fb, lin in zip(
            self._external.features(a), self._external.features(b), self._external.channel_weights
        ):
            term = ((fa - fb).square() * Tensor(lin.astype(a.dtype))).sum(axis=-1).mean()
            total = term if total is None else total + term
        return total


def l1() -> DistanceMetric:
    return DistanceMetric("l1")


def l2() -> DistanceMetric:
    return DistanceMetric("l2")


def pyramid(scales: int = 3) -> DistanceMetric:
    return DistanceMetric("pyramid", scales=scales)
