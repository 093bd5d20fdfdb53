"""Numerical toolkit for beta=2 log-gases with an extra pair interaction."""

__version__ = "0.1.0"
