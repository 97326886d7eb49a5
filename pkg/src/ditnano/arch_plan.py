"""DiT configuration space, closed-form parameter accounting and the budget planner.

The three sizing rules:

* depth  ``d = floor(log2 w)``, capped so the model fits the budget;
* heads  ``h = min(median(divisors(w)))``;
* widths restricted to ``2**n`` and ``3 * 2**n``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

from .errors import ConfigError, DomainError, PlanningError

# Width of the sinusoidal frequency vector fed to the timestep embedder.
FREQ_DIM = 256
# Candidates within this many utilization points of the best are re-ranked
# by closeness to the depth rule.
UTILIZATION_BAND = 0.05


@dataclass(frozen=True)
class DitConfig:
    depth: int
    width: int
    heads: int
    patch_size: int = 2
    image_size: int = 32
    in_channels: int = 3
    num_classes: int = 10
    mlp_ratio: int = 4

    def __post_init__(self):
        for name in ("depth", "width", "heads", "patch_size", "image_size", "in_channels", "mlp_ratio"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if not isinstance(self.num_classes, int) or self.num_classes < 0:
            raise ConfigError(f"num_classes must be a non-negative integer, got {self.num_classes!r}")
        if self.heads > self.width or self.width % self.heads:
            raise ConfigError(f"heads ({self.heads}) must divide width ({self.width})")
        if self.image_size % self.patch_size:
            raise ConfigError(
                f"patch_size ({self.patch_size}) must divide image_size ({self.image_size})"
            )

    @property
    def head_dim(self) -> int:
        return self.width // self.heads

    @property
    def grid(self) -> int:
        """Patches per image side."""
        return self.image_size // self.patch_size

    @property
    def num_tokens(self) -> int:
        return self.grid**2

    @property
    def patch_dim(self) -> int:
        """Scalars per flattened patch (``p*p*C``)."""
        return self.patch_size**2 * self.in_channels

    @property
    def mlp_hidden(self) -> int:
        return self.mlp_ratio * self.width

    @property
    def name(self) -> str:
        return f"d{self.depth}-w{self.width}-h{self.heads}"

    def replace(self, **changes) -> "DitConfig":
        fields_ = {
            k: getattr(self, k)
            for k in ("depth", "width", "heads", "patch_size", "image_size", "in_channels", "num_classes", "mlp_ratio")
        }
        fields_.update(changes)
        return DitConfig(**fields_)


@dataclass(frozen=True)
class ParamBreakdown:
    patch_embed: int
    pos_embed: int
    timestep_embed: int
    label_embed: int
    per_block: int
    depth: int
    final_head: int

    @property
    def blocks(self) -> int:
        return self.per_block * self.depth

    @property
    def total(self) -> int:
        return (
            self.patch_embed
            + self.pos_embed
            + self.timestep_embed
            + self.label_embed
            + self.blocks
            + self.final_head
        )

    def as_dict(self) -> dict[str, int]:
        return {
            "patch_embed": self.patch_embed,
            "pos_embed": self.pos_embed,
            "timestep_embed": self.timestep_embed,
            "label_embed": self.label_embed,
            "per_block": self.per_block,
            "blocks": self.blocks,
            "final_head": self.final_head,
            "total": self.total,
        }


def block_params(width: int, mlp_ratio: int = 4) -> int:
    """Weights in one transformer block (``18w^2 + 15w`` at ratio 4)."""
    w, hid = width, mlp_ratio * width
    attn = (3 * w * w + 3 * w) + (w * w + w)
    mlp = (w * hid + hid) + (hid * w + w)
    ada = 6 * w * w + 6 * w
    return attn + mlp + ada


def count_params(cfg: DitConfig) -> ParamBreakdown:
    """Closed-form parameter count for ``cfg``.

    Layer norms carry no affine weights (adaLN supplies scale and shift) and
    the label table has one extra row for the classifier-free-guidance null
    class.
    """
    w, pd = cfg.width, cfg.patch_dim
    return ParamBreakdown(
        patch_embed=pd * w + w,
        pos_embed=cfg.num_tokens * w,
        timestep_embed=FREQ_DIM * w + w + w * w + w,
        label_embed=(cfg.num_classes + 1) * w,
        per_block=block_params(w, cfg.mlp_ratio),
        depth=cfg.depth,
        final_head=(2 * w * w + 2 * w) + (w * pd + pd),
    )


def divisors(n: int) -> list[int]:
    small, large = [], []
    for k in range(1, math.isqrt(n) + 1):
        if n % k == 0:
            small.append(k)
            if k != n // k:
                large.append(n // k)
    return small + large[::-1]


def heads_rule(width: int) -> int:
    """Smallest element of the median set of the sorted divisors of ``width``.

    For an even number of divisors both middle divisors form the median set,
    so the lower one is returned.
    """
    if width < 1:
        raise DomainError(f"width must be >= 1, got {width}")
    divs = divisors(width)
    return divs[(len(divs) - 1) // 2]


def depth_rule(width: int) -> int:
    """``floor(log2 width)``; budget capping is the planner's job."""
    if width < 2:
        raise DomainError(f"depth rule needs width >= 2, got {width}")
    return width.bit_length() - 1


def hardware_friendly(w: int) -> bool:
    if w < 1:
        return False
    if w % 3 == 0:
        w //= 3
    return w & (w - 1) == 0


def width_candidates(w_min: int, w_max: int) -> list[int]:
    """All widths of the form ``2**n`` or ``3 * 2**n`` in ``[w_min, w_max]``."""
    out = set()
    n = 0
    while 2**n <= w_max:
        for w in (2**n, 3 * 2**n):
            if w_min <= w <= w_max:
                out.add(w)
        n += 1
    return sorted(out)


@dataclass(frozen=True)
class Candidate:
    cfg: DitConfig
    params: int
    utilization: float
    deficit: int
    notes: tuple[str, ...] = ()

    @property
    def name(self) -> str:
        return self.cfg.name


@dataclass(frozen=True)
class PlanResult:
    budget: int
    candidates: tuple[Candidate, ...]
    notes: tuple[str, ...] = field(default=())

    @property
    def best(self) -> Candidate:
        return self.candidates[0]

    def to_table(self) -> str:
        lines = [f"{'name':<16} {'d':>3} {'w':>5} {'h':>3} {'params':>10} {'util':>7} {'deficit':>7}  notes"]
        for c in self.candidates:
            lines.append(
                f"{c.name:<16} {c.cfg.depth:>3} {c.cfg.width:>5} {c.cfg.heads:>3} "
                f"{c.params:>10} {c.utilization:>7.4f} {c.deficit:>7}  {'; '.join(c.notes)}"
            )
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["name", "d", "w", "h", "params", "utilization", "deficit"])
        for c in self.candidates:
            writer.writerow(
                [c.name, c.cfg.depth, c.cfg.width, c.cfg.heads, c.params, f"{c.utilization:.6f}", c.deficit]
            )
        return buf.getvalue()


def _max_depth_within(base: DitConfig, budget: int, cap: int) -> int:
    """Largest ``d <= cap`` whose model fits ``budget``; 0 if none does."""
    fixed = count_params(base.replace(depth=1))
    per_block = fixed.per_block
    headroom = budget - (fixed.total - per_block)
    if headroom < per_block:
        return 0
    return min(cap, headroom // per_block)


def _rank(cands: list[Candidate]) -> list[Candidate]:
    best = max(c.utilization for c in cands)
    near = [c for c in cands if c.utilization >= best - UTILIZATION_BAND]
    rest = [c for c in cands if c.utilization < best - UTILIZATION_BAND]
    near.sort(key=lambda c: (c.deficit, c.cfg.depth, -c.utilization, c.cfg.width))
    rest.sort(key=lambda c: (-c.utilization, c.deficit, c.cfg.depth, c.cfg.width))
    return near + rest


def plan(
    budget: int,
    *,
    image_size: int = 32,
    patch_size: int = 2,
    in_channels: int = 3,
    num_classes: int = 10,
    mlp_ratio: int = 4,
    w_min: int = 16,
    w_max: int = 1024,
) -> PlanResult:
    """Rank (depth, width, heads) configurations that fit ``budget`` parameters.

    Each hardware-friendly width gets ``h = heads_rule(w)`` and
    ``d = min(depth_rule(w), deepest model within budget)``. Candidates are
    ordered by budget utilization; those within five points of the best are
    re-ordered by depth deficit and then by depth.

    Raises
    ------
    PlanningError
        If no width admits even a single block within the budget.
    """
    if budget < 1:
        raise PlanningError(f"budget must be positive, got {budget}")
    widths = [w for w in width_candidates(max(w_min, 2), w_max)]
    cands: list[Candidate] = []
    smallest = None
    for w in widths:
        h = heads_rule(w)
        base = DitConfig(
            depth=1, width=w, heads=h, patch_size=patch_size, image_size=image_size,
            in_channels=in_channels, num_classes=num_classes, mlp_ratio=mlp_ratio,
        )
        one_block = count_params(base).total
        smallest = one_block if smallest is None else min(smallest, one_block)
        rule_d = depth_rule(w)
        d = _max_depth_within(base, budget, rule_d)
        if d < 1:
            continue
        cfg = base.replace(depth=d)
        params = count_params(cfg).total
        notes = [f"h=min median divisors({w})"]
        if d < rule_d:
            notes.append(f"depth capped by budget (rule gives {rule_d})")
        else:
            notes.append(f"depth = floor(log2 {w})")
        cands.append(Candidate(cfg, params, params / budget, rule_d - d, tuple(notes)))
    if not cands:
        raise PlanningError(
            f"no configuration fits a budget of {budget} parameters; "
            f"smallest achievable model has {smallest} parameters",
            min_params=smallest,
        )
    return PlanResult(budget=budget, candidates=tuple(_rank(cands)))
