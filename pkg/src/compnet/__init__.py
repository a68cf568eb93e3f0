"""Sparse association networks from compositional count data, plus a synthetic benchmark generator."""

__version__ = "0.1.0"
