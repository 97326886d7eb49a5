"""Per-image FLOP accounting (2 FLOPs per multiply-accumulate).

Linear layers are charged ``2 * tokens * params`` (biases and adaLN
projections included per token), attention adds ``4 N^2 w`` for the score
and value products plus ``2 N^2 h`` of per-head softmax overhead. The
timestep embedder runs once per image; the label lookup is free.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..arch_plan import DitConfig, count_params


@dataclass(frozen=True)
class FlopBreakdown:
    embed: int
    timestep: int
    per_block: int
    depth: int
    head: int

    @property
    def blocks(self) -> int:
        return self.per_block * self.depth

    @property
    def total(self) -> int:
        return self.embed + self.timestep + self.blocks + self.head


def flop_breakdown(cfg: DitConfig) -> FlopBreakdown:
    n, w, h = cfg.num_tokens, cfg.width, cfg.heads
    pc = count_params(cfg)
    return FlopBreakdown(
        embed=2 * n * pc.patch_embed,
        timestep=2 * pc.timestep_embed,
        per_block=2 * n * pc.per_block + 4 * n * n * w + 2 * n * n * h,
        depth=cfg.depth,
        head=2 * n * pc.final_head,
    )


def count_flops(cfg: DitConfig) -> int:
    return flop_breakdown(cfg).total
