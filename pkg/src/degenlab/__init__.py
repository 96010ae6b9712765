"""Regularized degenerate parabolic equations: solver and proof-machinery checks."""

from . import bernstein, coefficients, core, exact, regularity, solver
from .coefficients import CoefficientParams
from .core import Field, Grid, Jet, SpaceTimeSolution

__version__ = "0.1.0"

__all__ = ["CoefficientParams", "Field", "Grid", "Jet", "SpaceTimeSolution", "bernstein",
           "coefficients", "core", "exact", "regularity", "solver"]
