"""Finite-difference companion for planar Benedicks domains."""
from .duhamel import LineHistory, duhamel_rhs, kernel_with_line_history
from .grid import Field, Grid, GridError, build_grid, read_field_binary, write_field_binary, write_field_csv
from .harmonic import FarData, HarmonicError, HarmonicProfile, harmonic_profile, laplace_harmonic
from .heat import (
    ADIStepper,
    HeatRun,
    KernelSetupError,
    SolverError,
    heat_solve,
    kernel_field,
    kernel_start,
    survival_field,
)

__all__ = [
    "ADIStepper",
    "FarData",
    "Field",
    "Grid",
    "GridError",
    "HarmonicError",
    "HarmonicProfile",
    "HeatRun",
    "KernelSetupError",
    "LineHistory",
    "SolverError",
    "build_grid",
    "duhamel_rhs",
    "harmonic_profile",
    "heat_solve",
    "kernel_field",
    "kernel_start",
    "kernel_with_line_history",
    "laplace_harmonic",
    "read_field_binary",
    "survival_field",
    "write_field_binary",
    "write_field_csv",
]
