"""Numerical laboratory for fully nonlinear elliptic transmission problems."""

__version__ = "0.1.0"
