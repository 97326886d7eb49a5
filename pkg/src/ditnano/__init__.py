"""Miniature diffusion-transformer design, distillation and frontier analysis."""

__version__ = "0.1.0"
