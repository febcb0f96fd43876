"""Exception types raised across the package."""

import numpy as np


class ShapeError(ValueError):
    """Array shapes or dimensions do not agree."""


class InvalidSpecError(ValueError):
    """A design, kernel or configuration specification is malformed."""


class UnsupportedGridError(InvalidSpecError):
    """Grid designs are only available in one and two dimensions."""


class InvalidKernelError(InvalidSpecError):
    """Kernel hyperparameters are outside their admissible range."""


class IllConditionedError(np.linalg.LinAlgError):
    """Cholesky factorization failed even after jitter escalation."""


class DomainError(ValueError):
    """A benchmark function was queried outside its domain."""


class DivergenceError(FloatingPointError):
    """The objective returned a non-finite value where one is required."""


class FitFailureError(RuntimeError):
    """Model fitting failed; ``last_params`` holds the last finite iterate."""

    def __init__(self, message, last_params=None):
        super().__init__(message)
        self.last_params = last_params


class OracleError(RuntimeError):
    """The labeling function failed during an active-learning round."""
