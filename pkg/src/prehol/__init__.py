"""Discrete complex analysis on square and hexagonal lattices."""

__version__ = "0.1.0"
