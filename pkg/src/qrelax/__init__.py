"""Pseudospectral solvers for quantum Navier-Stokes-Poisson relaxation to quantum drift-diffusion."""

from .errors import (
    CompatibilityError,
    ConfigError,
    DegenerateError,
    MismatchError,
    NaNError,
    NumericalError,
    PositivityError,
    QrelaxError,
    StabilityError,
    VacuumError,
)
from .grid import PeriodicGrid, make_grid

__version__ = "0.1.0"

__all__ = [
    "PeriodicGrid",
    "make_grid",
    "QrelaxError",
    "NumericalError",
    "StabilityError",
    "NaNError",
    "PositivityError",
    "VacuumError",
    "CompatibilityError",
    "MismatchError",
    "DegenerateError",
    "ConfigError",
]
