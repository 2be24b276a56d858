"""Exception types shared across the package.

Hierarchy is flat on purpose: callers (and the CLI exit-code mapping)
only ever need to distinguish configuration problems, numerical guard
trips, and calibration failures.
"""


class TwinbeamError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(TwinbeamError):
    """Invalid, unknown, or unparseable configuration input."""


class GridError(TwinbeamError):
    """Grid construction or grid/field compatibility violation."""


class NyquistError(TwinbeamError):
    """A propagation step would alias the quadratic chirp.

    Carries enough context to act on: the attempted distance, the
    largest safe distance for the current sampling, and the padded
    grid size that would make the attempted distance safe.
    """

    def __init__(self, message: str, *, max_distance: float | None = None,
                 required_n: int | None = None):
        super().__init__(message)
        self.max_distance = max_distance
        self.required_n = required_n


class CalibrationError(TwinbeamError):
    """Calibration table unusable (non-monotone, broken model, out of range)."""


class FitError(TwinbeamError):
    """Ill-conditioned or impossible model fit."""
