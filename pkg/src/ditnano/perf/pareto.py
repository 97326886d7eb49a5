"""Non-dominated filtering over (params, latency, fid), all minimized."""

from __future__ import annotations

from typing import Sequence

from .results import DesignPoint


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """``a`` is no worse than ``b`` everywhere and strictly better somewhere."""
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def frontier_indices(objectives: Sequence[Sequence[float]]) -> list[int]:
    """Indices of non-dominated vectors, in input order.

    Sweeps the vectors in lexicographic order. A dominator always sorts
    strictly before what it dominates, and dominance is transitive, so each
    vector only needs checking against the frontier found so far. Equal
    vectors never dominate each other and all survive.
    """
    order = sorted(range(len(objectives)), key=lambda i: (tuple(objectives[i]), i))
    kept: list[int] = []
    for i in order:
        if not any(dominates(objectives[j], objectives[i]) for j in kept):
            kept.append(i)
    return sorted(kept)


def pareto_frontier(points: Sequence[DesignPoint]) -> list[DesignPoint]:
    return [points[i] for i in frontier_indices([p.objectives for p in points])]
