"""Exception types shared across the simulator layers."""


class SpinpadError(Exception):
    """Base class for all simulator errors."""


class InvalidParameterError(SpinpadError, ValueError):
    """A physical or numerical parameter is outside its valid domain."""


class NumericalFailureError(SpinpadError, ArithmeticError):
    """The integrator produced a non-finite or degenerate state."""


class InsufficientDataError(SpinpadError, ValueError):
    """Not enough usable points for a fit or an estimate."""


class InvalidFitError(SpinpadError, ValueError):
    """A log-error fit is unusable (wrong sign slope, degenerate input)."""


class ConfigError(SpinpadError, ValueError):
    """A config, calibration, or workload file failed validation."""


class OutOfRangeError(SpinpadError, ValueError):
    """A query point lies outside the calibrated/anchored range."""


class InvalidLayerError(SpinpadError, ValueError):
    """A layer specification is malformed (e.g. kernel larger than input)."""


class NotAGemmError(SpinpadError, ValueError):
    """The requested phase has no systolic GEMM view (vector-path only)."""
