"""Spectral Galerkin simulator and verification lab for damped wave equations."""

__version__ = "0.1.0"
