"""Alternating iterative method for elliptic Cauchy problems."""
from . import errors, experiments, fem, geometry, kmf, regularization, spectral

__version__ = "0.1.0"
__all__ = ["errors", "experiments", "fem", "geometry", "kmf", "regularization", "spectral"]
