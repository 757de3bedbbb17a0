"""Shallow water over fast-oscillating bathymetry."""

__version__ = "0.1.0"
