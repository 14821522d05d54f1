"""Numerical laboratory for pointwise boundary Hölder regularity."""

__version__ = "0.1.0"
