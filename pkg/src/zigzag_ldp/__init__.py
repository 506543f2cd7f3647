"""Zig-zag process simulation and large deviations of its empirical measure."""

__version__ = "0.1.0"
