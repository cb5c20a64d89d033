"""Exception hierarchy for mlgspatial."""


class MLGSpatialError(Exception):
    """Base class for all package errors."""


class ParameterError(MLGSpatialError, ValueError):
    """Invalid distribution or configuration parameters."""


class DataError(MLGSpatialError, ValueError):
    """Input data missing or inconsistent with the requested model."""


class DegenerateError(MLGSpatialError, ValueError):
    """Input has no usable variation (e.g. constant spectra)."""


class DegenerateTruncationError(MLGSpatialError, RuntimeError):
    """Rejection sampler for a truncated draw has negligible acceptance."""


class NumericalError(MLGSpatialError, FloatingPointError):
    """Overflow or factorization failure inside the sampler.

    Attributes
    ----------
    iteration : int or None
        Gibbs iteration at which the failure occurred, when known.
    """

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration
