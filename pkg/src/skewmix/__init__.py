"""Numerical experiments on mixing rates of compact group extensions of expanding maps."""

__version__ = "0.1.0"
