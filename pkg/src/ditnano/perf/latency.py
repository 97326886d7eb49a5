"""Linear latency model over depth and per-layer matmul/attention cost.

``L = c0 + c1*d + c2*d*N*w^2 + c3*d*N^2*w`` with an optional ``c4*d*h*N^2``
heads term. Coefficients come from ordinary least squares on column-scaled
features; diagnostics include residuals and the Spearman correlation between
predictions and measurements.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import spearmanr

from ..arch_plan import DitConfig
from ..errors import FitError
from .results import DesignPoint

TERMS = ("const", "d", "d*N*w^2", "d*N^2*w")
HEADS_TERM = "d*h*N^2"
MIN_POINTS = 5


def features(cfg: DitConfig, heads_term: bool = False) -> np.ndarray:
    d, w, h, n = cfg.depth, cfg.width, cfg.heads, cfg.num_tokens
    row = [1.0, d, d * n * w * w, d * n * n * w]
    if heads_term:
        row.append(d * h * n * n)
    return np.array(row, dtype=np.float64)


@dataclass
class LatencyModel:
    coefficients: np.ndarray
    terms: tuple[str, ...]
    residuals: np.ndarray
    spearman: float

    @property
    def heads_term(self) -> bool:
        return HEADS_TERM in self.terms

    def predict(self, cfg: DitConfig) -> float:
        return float(features(cfg, self.heads_term) @ self.coefficients)

    def predict_many(self, cfgs: Sequence[DitConfig]) -> np.ndarray:
        return np.array([self.predict(c) for c in cfgs])

    def summary(self) -> dict[str, float]:
        out = {t: float(c) for t, c in zip(self.terms, self.coefficients)}
        out["spearman"] = self.spearman
        out["rms_residual"] = float(np.sqrt(np.mean(self.residuals**2)))
        return out


def _deficient_terms(a: np.ndarray, terms: tuple[str, ...], rank: int) -> list[str]:
    """Terms whose removal keeps the rank: each lies in the span of the others."""
    out = []
    for j, name in enumerate(terms):
        rest = np.delete(a, j, axis=1)
        if rest.shape[1] and np.linalg.matrix_rank(rest) == rank:
            out.append(name)
    return out


def fit_latency(points: Sequence[DesignPoint], heads_term: bool = False) -> LatencyModel:
    terms = TERMS + ((HEADS_TERM,) if heads_term else ())
    if len(points) < MIN_POINTS:
        raise FitError(f"latency fit needs at least {MIN_POINTS} points, got {len(points)}", list(terms))
    a = np.stack([features(p.cfg, heads_term) for p in points])
    y = np.array([p.latency for p in points], dtype=np.float64)
    scale = np.abs(a).max(axis=0)
    scale[scale == 0] = 1.0
    a_s = a / scale
    rank = np.linalg.matrix_rank(a_s)
    if rank < a.shape[1]:
        bad = _deficient_terms(a_s, terms, rank)
        raise FitError(f"design matrix has rank {rank} < {a.shape[1]}; dependent terms: {', '.join(bad)}", bad)
    sol, *_ = np.linalg.lstsq(a_s, y, rcond=None)
    coef = sol / scale
    pred = a @ coef
    rho = float(spearmanr(pred, y).statistic) if len(set(y)) > 1 else float("nan")
    return LatencyModel(coefficients=coef, terms=terms, residuals=y - pred, spearman=rho)
