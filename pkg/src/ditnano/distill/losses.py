"""Baseline (GET), teaching-assistant and multi-in-one distillation losses.

Every loss returns ``(loss, terms)``: ``loss`` is a scalar :class:`Tensor`
wired into the student's graph, ``terms`` maps each component to its float
value for logging.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from ..arch_plan import DitConfig
from ..errors import SetupError, ShapeError
from ..schedules import Mi1Plan, ScheduleSpec, mi1_targets
from ..tiny_dit.autograd import Tensor, no_grad
from ..tiny_dit.model import ModelState, decode_head, forward, init_model
from .data import TeacherPair, stack_pairs
from .metrics import DistanceMetric

# Full-size assistant; desk-scale runs construct a smaller one.
TA_DEFAULT = (12, 384, 12)


@dataclass
class Batch:
    """Teacher pairs stacked along a leading axis; class -1 is the null label."""

    z: np.ndarray
    c: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        if self.z.shape != self.x.shape:
            raise ShapeError(f"noise {self.z.shape} and image {self.x.shape} differ")
        if self.z.ndim != 4 or len(self.c) != self.z.shape[0]:
            raise ShapeError("batch needs z/x of shape [B, C, H, W] and B class ids")

    @classmethod
    def of(cls, data) -> "Batch":
        if isinstance(data, Batch):
            return data
        if isinstance(data, TeacherPair):
            return cls(data.z[None], np.array([data.c]), data.x[None])
        return cls(*stack_pairs(data))

    def astype(self, dtype) -> "Batch":
        return Batch(self.z.astype(dtype), self.c, self.x.astype(dtype))

    def __len__(self) -> int:
        return len(self.c)


def _batch_for(m: ModelState, data) -> Batch:
    b = Batch.of(data)
    want = (m.cfg.in_channels, m.cfg.image_size, m.cfg.image_size)
    if b.z.shape[1:] != want:
        raise ShapeError(f"pairs have shape {b.z.shape[1:]}, model expects {want}")
    return b.astype(m.dtype)


def loss_get(metric: DistanceMetric, m: ModelState, data) -> tuple[Tensor, dict[str, float]]:
    """Distance between the teacher image and the student's one-step output."""
    b = _batch_for(m, data)
    trace = forward(m, b.z, list(b.c))
    loss = metric(trace.image, b.x)
    return loss, {"get": loss.item()}


@dataclass
class TaSetup:
    """Frozen teaching assistant plus the student's learned width expansion."""

    ta: ModelState
    expansion: Tensor
    lambdas: tuple[float, float, float] = (1.0, 1.0, 1.0)
    student_layer: int | None = None
    ta_layer: int | None = None
    feature_mode: str = "tokens"
    feature_metric: DistanceMetric | None = None

    def __post_init__(self):
        if any(l < 0 for l in self.lambdas) or len(self.lambdas) != 3:
            raise SetupError(f"need three non-negative loss weights, got {self.lambdas}")
        if self.ta_layer is None:
            self.ta_layer = max(self.ta.cfg.depth - 1, 1)
        if not 1 <= self.ta_layer <= self.ta.cfg.depth:
            raise SetupError(f"TA layer {self.ta_layer} outside 1..{self.ta.cfg.depth}")
        if self.expansion.shape[1] != self.ta.cfg.width:
            raise SetupError(
                f"expansion maps to width {self.expansion.shape[1]}, TA width is {self.ta.cfg.width}"
            )
        if self.feature_mode not in ("tokens", "decoded"):
            raise SetupError(f"feature mode must be 'tokens' or 'decoded', got {self.feature_mode!r}")
        for p in self.ta.params.values():
            p.requires_grad = False

    @classmethod
    def create(
        cls,
        student_cfg: DitConfig,
        ta: ModelState,
        seed: int = 0,
        **kwargs,
    ) -> "TaSetup":
        rng = np.random.default_rng([seed, 0x7A])
        w_s, w_t = student_cfg.width, ta.cfg.width
        proj = rng.standard_normal((w_s, w_t)) / np.sqrt(w_s)
        return cls(ta=ta, expansion=Tensor(proj.astype(ta.dtype), requires_grad=True), **kwargs)

    @staticmethod
    def default_ta_config(student_cfg: DitConfig) -> DitConfig:
        d, w, h = TA_DEFAULT
        return student_cfg.replace(depth=d, width=w, heads=h)

    def check_student(self, cfg: DitConfig) -> int:
        """Validate geometry against ``cfg``; returns the student layer to match."""
        ta = self.ta.cfg
        geo = ("patch_size", "image_size", "in_channels", "num_classes")
        if any(getattr(ta, g) != getattr(cfg, g) for g in geo):
            raise SetupError("TA and student must share patch size, image size, channels and classes")
        if self.expansion.shape[0] != cfg.width:
            raise SetupError(f"expansion expects student width {self.expansion.shape[0]}, got {cfg.width}")
        layer = self.student_layer if self.student_layer is not None else max(cfg.depth - 1, 1)
        if not 1 <= layer <= cfg.depth:
            raise SetupError(f"student layer {layer} outside 1..{cfg.depth}")
        return layer

    def trainable(self) -> dict[str, Tensor]:
        return {"ta.expansion": self.expansion}


def loss_ta(metric: DistanceMetric, setup: TaSetup, m: ModelState, data) -> tuple[Tensor, dict[str, float]]:
    """``l0*D(x, x_hat) + l1*D(x_ta, x_hat) + l2*F(ta_tap, E(student_tap))``.

    Terms whose weight is zero are not evaluated. ``F`` is the mean squared
    error on expanded tokens, or ``feature_metric`` on both taps decoded
    through their own heads when ``feature_mode == "decoded"``.
    """
    layer = setup.check_student(m.cfg)
    b = _batch_for(m, data)
    lam0, lam1, lam2 = setup.lambdas
    trace = forward(m, b.z, list(b.c))
    ta_trace = None
    if lam1 or lam2:
        with no_grad():
            ta_trace = forward(setup.ta, b.z.astype(setup.ta.dtype), list(b.c))
    loss = None
    terms: dict[str, float] = {}

    def add(name: str, lam: float, term: Tensor):
        nonlocal loss
        terms[name] = term.item()
        weighted = term * lam
        loss = weighted if loss is None else loss + weighted

    if lam0:
        add("teacher", lam0, metric(trace.image, b.x))
    if lam1:
        add("ta", lam1, metric(trace.image, ta_trace.image.data))
    if lam2:
        s_tap = trace.tap(layer)
        t_tap = ta_trace.tap(setup.ta_layer)
        if setup.feature_mode == "tokens":
            feat = (s_tap @ setup.expansion - t_tap.data).square().mean()
        else:
            fm = setup.feature_metric or metric
            with no_grad():
                t_img = decode_head(setup.ta, t_tap, ta_trace.cond)
            feat = fm(decode_head(m, s_tap, trace.cond), t_img.data)
        add("features", lam2, feat)
    if loss is None:
        loss = Tensor(np.zeros((), dtype=m.dtype))
    return loss, terms


def loss_mi1(
    metric: DistanceMetric, spec: ScheduleSpec, plan: Mi1Plan, m: ModelState, data
) -> tuple[Tensor, dict[str, float]]:
    """Sum over the plan of distances between decoded layer taps and ODE targets."""
    plan.validate_for(m.cfg.depth)
    b = _batch_for(m, data)
    trace = forward(m, b.z, list(b.c))
    loss = None
    terms: dict[str, float] = {}
    for layer, target in mi1_targets(spec, plan, b.z, b.x):
        if layer == m.cfg.depth:
            pred = trace.image
        else:
            pred = decode_head(m, trace.tap(layer), trace.cond)
        term = metric(pred, target.astype(m.dtype))
        terms[f"layer{layer}"] = term.item()
        loss = term if loss is None else loss + term
    return loss, terms


def make_ta(student_cfg: DitConfig, ta_cfg: DitConfig | None = None, seed: int = 0, dtype=np.float32) -> ModelState:
    cfg = ta_cfg or TaSetup.default_ta_config(student_cfg)
    return init_model(cfg, seed, dtype=dtype, requires_grad=False)
