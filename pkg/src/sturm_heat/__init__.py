"""Spectral solver for the heat equation with a time-dependent Sturm-Liouville operator."""

__version__ = "0.1.0"
