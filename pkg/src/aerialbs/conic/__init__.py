"""Conic optimization: standard-form programs, presolve and an interior-point solver."""

from .program import Cone, ConicBuilder, ConicProgram, aff, program_from_dense
from .solver import ConicSolution, Status, solve

__all__ = ["Cone", "ConicBuilder", "ConicProgram", "ConicSolution", "Status", "aff",
           "program_from_dense", "solve"]
