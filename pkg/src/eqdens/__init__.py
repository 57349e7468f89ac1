"""Equivariant networks for electron-density coefficients, pure numpy."""

__version__ = "0.1.0"
