"""Numerical lab for weighted Fock spaces: A_{p,r} weights, Toeplitz operators, Berezin transforms."""

from . import bergman, fock, localization, matrix, numerics, weights
from .fock import FockParams
from .numerics import GridSpec, build_grid

__all__ = ["bergman", "fock", "localization", "matrix", "numerics", "weights", "FockParams", "GridSpec",
           "build_grid"]
__version__ = "0.1.0"
