"""Weighted Hörmander systems: lifting, exponential charts and approximation diagnostics."""

__version__ = "0.1.0"
