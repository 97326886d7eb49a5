"""Offline distillation loop: AdamW on the student, EMA shadow per step."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from ..errors import ConfigError, DivergenceError, NumericError
from ..fileio import atomic_write_text
from ..schedules import Mi1Plan, ScheduleSpec
from ..tiny_dit.autograd import Tensor
from ..tiny_dit.checkpoint import save_checkpoint
from ..tiny_dit.model import EmaState, ModelState, ema_update, gradients
from .data import TeacherPair, stack_pairs
from .losses import Batch, TaSetup, loss_get, loss_mi1, loss_ta
from .metrics import DistanceMetric

log = logging.getLogger(__name__)

METHODS = ("get", "ta", "mi1")


@dataclass
class TrainConfig:
    method: str = "get"
    lr: float = 1e-4
    weight_decay: float = 0.01
    batch_size: int = 32
    epochs: int = 100
    steps: int | None = None
    ema_decay: float = 0.9999
    seed: int = 0
    cfg_dropout: float = 0.1
    metric: DistanceMetric = field(default_factory=DistanceMetric)
    plan: Mi1Plan | None = None
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    loss_smoothing: float = 0.9

    def __post_init__(self):
        self.method = self.method.lower()
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.lr < 0 or self.weight_decay < 0:
            raise ConfigError("learning rate and weight decay must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("batch size must be positive")
        if self.epochs < 0 or (self.steps is not None and self.steps < 0):
            raise ConfigError("epochs and steps must be non-negative")
        if not 0 <= self.ema_decay <= 1:
            raise ConfigError(f"EMA decay must lie in [0, 1], got {self.ema_decay}")
        if not 0 <= self.cfg_dropout <= 1:
            raise ConfigError(f"cfg dropout must lie in [0, 1], got {self.cfg_dropout}")
        if self.method == "mi1" and self.plan is None:
            raise ConfigError("method mi1 needs a layer/time plan")
        if isinstance(self.metric, str):
            self.metric = DistanceMetric.parse(self.metric)

    def steps_for(self, n_pairs: int) -> int:
        if self.steps is not None:
            return self.steps
        return self.epochs * math.ceil(n_pairs / self.batch_size)


class AdamW:
    """Adam with decoupled weight decay: ``p <- p*(1 - lr*wd)`` before the Adam step."""

    def __init__(self, params: dict[str, Tensor], lr=1e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        self.params = params
        self.lr, self.betas, self.eps, self.weight_decay = lr, betas, eps, weight_decay
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.betas
        c1, c2 = 1 - b1**self.t, 1 - b2**self.t
        for k, p in self.params.items():
            g = grads[k]
            p.data *= 1 - self.lr * self.weight_decay
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            p.data -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


@dataclass
class StepRecord:
    step: int
    loss: float
    ema_loss: float
    terms: dict[str, float]


@dataclass
class TrainResult:
    model: ModelState
    ema: EmaState
    history: list[StepRecord]
    extra: dict[str, Tensor] = field(default_factory=dict)

    @property
    def losses(self) -> list[float]:
        return [r.loss for r in self.history]

    def term_curve(self, name: str) -> list[float]:
        return [r.terms[name] for r in self.history]

    def loss_csv(self) -> str:
        return loss_curve_csv(self.history)


def loss_curve_csv(history: Iterable[StepRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["step", "loss", "ema_loss"])
    for r in history:
        writer.writerow([r.step, repr(r.loss), repr(r.ema_loss)])
    return buf.getvalue()


def _materialize(data) -> Batch:
    if isinstance(data, Batch):
        return data
    pairs = list(data)
    if not pairs:
        raise ConfigError("training data source is empty")
    return Batch(*stack_pairs(pairs))


def train(
    cfg: TrainConfig,
    data: Iterable[TeacherPair] | Batch,
    model: ModelState,
    *,
    ta: TaSetup | None = None,
    checkpoint: str | os.PathLike | None = None,
    loss_csv: str | os.PathLike | None = None,
    on_step: Callable[[int, ModelState, StepRecord], None] | None = None,
) -> TrainResult:
    """Distil ``model`` on teacher pairs; returns the trained and EMA weights.

    The model is trained in place. Sampling order and label dropout come
    from one generator seeded with ``cfg.seed``, so runs are reproducible.
    On a non-finite loss the state from before the failing step is written
    to ``checkpoint`` (if given) and :class:`DivergenceError` is raised.
    """
    if cfg.method == "ta" and ta is None:
        raise ConfigError("method ta needs a teaching-assistant setup")
    if cfg.method == "mi1":
        cfg.plan.validate_for(model.cfg.depth)
    if ta is not None:
        ta.check_student(model.cfg)
    batch = _materialize(data)
    n = len(batch)
    rng = np.random.default_rng(cfg.seed)

    trainable = dict(model.params)
    extra = ta.trainable() if (ta is not None and cfg.method == "ta") else {}
    trainable.update(extra)
    for p in trainable.values():
        p.requires_grad = True
    opt = AdamW(trainable, lr=cfg.lr, betas=cfg.betas, eps=cfg.eps, weight_decay=cfg.weight_decay)
    ema = EmaState.from_model(model, cfg.ema_decay)

    def objective(b: Batch):
        if cfg.method == "get":
            return loss_get(cfg.metric, model, b)
        if cfg.method == "ta":
            return loss_ta(cfg.metric, ta, model, b)
        return loss_mi1(cfg.metric, cfg.schedule, cfg.plan, model, b)

    history: list[StepRecord] = []
    total = cfg.steps_for(n)
    per_epoch = math.ceil(n / cfg.batch_size)
    smoothed = None
    perm = None
    for step in range(total):
        k = step % per_epoch
        if k == 0:
            perm = rng.permutation(n)
        idx = perm[k * cfg.batch_size : (k + 1) * cfg.batch_size]
        classes = batch.c[idx].copy()
        classes[rng.random(len(idx)) < cfg.cfg_dropout] = -1
        loss, terms = objective(Batch(batch.z[idx], classes, batch.x[idx]))
        value = loss.item()
        try:
            if not math.isfinite(value):
                raise NumericError(f"loss is {value}")
            grads = gradients(loss, trainable)
        except NumericError as exc:
            if checkpoint is not None:
                save_checkpoint(checkpoint, model, ema)
            raise DivergenceError(f"training diverged at step {step}: {exc}", step, (model, ema)) from None
        opt.step(grads)
        ema = ema_update(ema, model)
        smoothed = value if smoothed is None else cfg.loss_smoothing * smoothed + (1 - cfg.loss_smoothing) * value
        rec = StepRecord(step, value, smoothed, terms)
        history.append(rec)
        if on_step is not None:
            on_step(step, model, rec)
        if step % 50 == 0 or step == total - 1:
            log.info("step %d loss %.6f ema_loss %.6f", step, value, smoothed)

    if checkpoint is not None:
        save_checkpoint(checkpoint, model, ema)
    if loss_csv is not None:
        atomic_write_text(loss_csv, loss_curve_csv(history))
    return TrainResult(model=model, ema=ema, history=history, extra=extra)


def window_means(values: list[float], windows: int) -> list[float]:
    """Means of ``windows`` equal consecutive slices (remainder dropped from the front)."""
    size = len(values) // windows
    if size == 0:
        raise ValueError(f"{len(values)} values cannot fill {windows} windows")
    start = len(values) - size * windows
    return [float(np.mean(values[start + i * size : start + (i + 1) * size])) for i in range(windows)]
