"""Exact and numeric toolkit for compatibility complexes of first-order systems."""

__version__ = "0.1.0"
