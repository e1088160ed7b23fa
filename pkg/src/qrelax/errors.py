"""Exception hierarchy.

``NumericalError`` subclasses map to CLI exit code 1 and ``ConfigError``
to exit code 2.
"""


class QrelaxError(Exception):
    """Base class for all package errors."""


class NumericalError(QrelaxError):
    pass


class StabilityError(NumericalError):
    """Step size above the stability bound, or the implicit solve diverged."""


class NaNError(NumericalError):
    pass


class PositivityError(NumericalError):
    """Density fell below half the vacuum floor."""


class VacuumError(NumericalError):
    """Density below the floor while strict mode is on."""


class CompatibilityError(QrelaxError):
    """Poisson source with nonzero mean."""


class MismatchError(QrelaxError):
    """Trajectories that cannot be compared (grid or snapshot times differ)."""


class DegenerateError(QrelaxError):
    pass


class ConfigError(QrelaxError):
    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)
