"""Numerical toolkit for group-invariant Moser-Trudinger analysis on closed surfaces."""

__version__ = "0.1.0"
