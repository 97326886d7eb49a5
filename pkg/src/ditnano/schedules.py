"""EDM sigma schedule and the forward probability-flow interpolant.

``sigma(t)`` runs from ``sigma_max`` at ``t=0`` to ``sigma_min`` at ``t=1``.
The interpolant is

    x(t) = x0 / sqrt(1 + sigma(t)^2) + eps * sigma(t) / sqrt(1 + sigma(t)^2)

and ``eps`` is recovered from a teacher pair so that ``x`` equals the
teacher noise ``z`` at the noise endpoint (``t=0``). Layer/time plans list
*remaining* time: a listed time ``s`` is evaluated at ``t = 1 - s``, so
``s=0`` is the clean end and larger ``s`` is noisier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, PlanError, ShapeError

NOISE_T = 0.0
CLEAN_T = 1.0


@dataclass(frozen=True)
class ScheduleSpec:
    sigma_min: float = 0.02
    sigma_max: float = 80.0
    rho: float = 7.0

    def __post_init__(self):
        if not (0 < self.sigma_min < self.sigma_max):
            raise DomainError(f"need 0 < sigma_min < sigma_max, got {self.sigma_min}, {self.sigma_max}")
        if not self.rho > 0:
            raise DomainError(f"rho must be positive, got {self.rho}")


def _check_t(t: float) -> float:
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t must lie in [0, 1], got {t}")
    return t


def sigma(spec: ScheduleSpec, t: float) -> float:
    t = _check_t(t)
    inv = 1.0 / spec.rho
    hi, lo = spec.sigma_max**inv, spec.sigma_min**inv
    return (hi + t * (lo - hi)) ** spec.rho


def alpha(spec: ScheduleSpec, t: float) -> float:
    s = sigma(spec, t)
    return 1.0 / (1.0 + s * s)


def coefficients(spec: ScheduleSpec, t: float) -> tuple[float, float]:
    """(signal, noise) weights of the interpolant at ``t``."""
    s = sigma(spec, t)
    norm = math.sqrt(1.0 + s * s)
    return 1.0 / norm, s / norm


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shapes differ: {a.shape} vs {b.shape}")


def recover_epsilon(spec: ScheduleSpec, z: np.ndarray, x0: np.ndarray) -> np.ndarray:
    """Noise direction placing ``z`` on the trajectory at the noise endpoint."""
    z, x0 = np.asarray(z), np.asarray(x0)
    _same_shape(z, x0)
    a_sig, a_noise = coefficients(spec, NOISE_T)
    return (z - a_sig * x0) / a_noise


def interpolate(spec: ScheduleSpec, x0: np.ndarray, eps: np.ndarray, t: float) -> np.ndarray:
    x0, eps = np.asarray(x0), np.asarray(eps)
    _same_shape(x0, eps)
    a_sig, a_noise = coefficients(spec, t)
    return a_sig * x0 + a_noise * eps


@dataclass(frozen=True)
class Mi1Plan:
    """Student layers (1-indexed) mapped to remaining-time values."""

    layers: tuple[int, ...]
    times: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(int(l) for l in self.layers))
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        if not self.layers or len(self.layers) != len(self.times):
            raise PlanError(f"need equal, non-empty layer and time lists, got {self.layers} / {self.times}")
        if any(b <= a for a, b in zip(self.layers, self.layers[1:])):
            raise PlanError(f"layers must be strictly increasing: {self.layers}")
        if any(b >= a for a, b in zip(self.times, self.times[1:])):
            raise PlanError(f"times must be strictly decreasing: {self.times}")
        if self.layers[0] < 1:
            raise PlanError(f"layers are 1-indexed, got {self.layers[0]}")
        if not all(0.0 <= t <= 1.0 for t in self.times):
            raise PlanError(f"times must lie in [0, 1]: {self.times}")
        if self.times[-1] != 0.0:
            raise PlanError(f"last time must be 0, got {self.times[-1]}")

    def validate_for(self, depth: int) -> None:
        if self.layers[-1] != depth:
            raise PlanError(f"plan must end at the last layer {depth}, ends at {self.layers[-1]}")

    @classmethod
    def get_only(cls, depth: int) -> "Mi1Plan":
        return cls((depth,), (0.0,))

    def pairs(self) -> list[tuple[int, float]]:
        return list(zip(self.layers, self.times))


def formula_time(listed: float) -> float:
    """Map a plan's remaining-time value onto the schedule's ``t``."""
    return 1.0 - listed


def mi1_sigmas(spec: ScheduleSpec, plan: Mi1Plan) -> list[float]:
    return [sigma(spec, formula_time(t)) for t in plan.times]


def mi1_targets(
    spec: ScheduleSpec, plan: Mi1Plan, z: np.ndarray, x0: np.ndarray, depth: int | None = None
) -> list[tuple[int, np.ndarray]]:
    """Intermediate targets ``x(t)`` for each (layer, time) in ``plan``.

    Works on single images or batches; the leading axes just broadcast.
    """
    if depth is not None:
        plan.validate_for(depth)
    eps = recover_epsilon(spec, z, x0)
    return [(layer, interpolate(spec, x0, eps, formula_time(t))) for layer, t in plan.pairs()]


def schedule_table(spec: ScheduleSpec, points: int) -> list[tuple[float, float, float]]:
    if points < 2:
        raise DomainError(f"need at least 2 points, got {points}")
    ts = [i / (points - 1) for i in range(points)]
    return [(t, sigma(spec, t), alpha(spec, t)) for t in ts]


def parse_plan(layers: Sequence[int] | str, times: Sequence[float] | str) -> Mi1Plan:
    if isinstance(layers, str):
        layers = [int(v) for v in layers.split(",") if v.strip()]
    if isinstance(times, str):
        times = [float(v) for v in times.split(",") if v.strip()]
    return Mi1Plan(tuple(layers), tuple(times))
