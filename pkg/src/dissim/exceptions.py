"""Exception hierarchy used across the package."""

import numpy as np


class DissimError(Exception):
    """Base class for all package errors."""


class DimensionError(DissimError, ValueError):
    """Raised when matrix or vector shapes are not conformal.

    The offending block name is kept in ``block`` so that reports can
    point at it directly.
    """

    def __init__(self, message, block=None):
        super().__init__(message)
        self.block = block


class NumericError(DissimError, ArithmeticError):
    """Raised on non-finite input data."""


class DivergenceError(NumericError):
    """Raised when a simulated state becomes non-finite."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class RankError(DissimError, np.linalg.LinAlgError):
    """Raised when a matrix that must be invertible is singular."""


class DomainError(DissimError, ValueError):
    """Raised when scalar parameters violate their admissible range."""


class InfeasibleError(DissimError):
    """Raised when a required image inclusion does not hold."""

    def __init__(self, message, step=None, residual=None):
        super().__init__(message)
        self.step = step
        self.residual = residual


class ConfigError(DissimError, ValueError):
    """Raised for malformed configuration files.

    ``path`` is a JSON pointer to the offending entry.
    """

    def __init__(self, message, path=""):
        super().__init__(f"{path or '/'}: {message}")
        self.path = path
