"""Numerical laboratory for strongly convex (weakly) Kähler Finsler metrics."""

__version__ = "0.1.0"
