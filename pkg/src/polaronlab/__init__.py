"""Numerical laboratory for Gaussian confinement of the discretized polaron path measure."""

__version__ = "0.1.0"
