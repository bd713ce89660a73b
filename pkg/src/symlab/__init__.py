"""Numerical laboratory for symmetry breaking in loss and energy landscapes."""

__version__ = "0.1.0"
