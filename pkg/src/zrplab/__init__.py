"""Kinetic Monte Carlo laboratory for equilibrium fluctuations of zero-range processes."""

__version__ = "0.1.0"
