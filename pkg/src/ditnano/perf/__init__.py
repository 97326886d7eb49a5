"""FLOP counts, the latency model and Pareto analysis of design tables."""

from .flops import FlopBreakdown, count_flops, flop_breakdown
from .latency import LatencyModel, fit_latency
from .pareto import dominates, frontier_indices, pareto_frontier
from .results import DesignPoint, bundled_table, format_results, frontier_gnuplot, load_results_csv, parse_results, write_results_csv

__all__ = [
    "DesignPoint",
    "FlopBreakdown",
    "LatencyModel",
    "bundled_table",
    "count_flops",
    "dominates",
    "fit_latency",
    "flop_breakdown",
    "format_results",
    "frontier_gnuplot",
    "frontier_indices",
    "load_results_csv",
    "pareto_frontier",
    "parse_results",
    "write_results_csv",
]
