"""Spectral laboratory for gauge-invariant two-point functions of linearized
Yang-Mills fields on a time-dependent background over R x S^1."""

__version__ = "0.1.0"
