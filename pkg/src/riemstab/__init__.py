"""Geodesic one-step integrators on S^2 and SPD(n), with contractivity analysis tools."""

__version__ = "0.1.0"
