"""Analytical toolkit for MoE hardware/model co-design: low-precision formats,
memory and FLOPs calculators, expert-parallel bounds and fat-tree cost models."""

__version__ = "0.1.0"
