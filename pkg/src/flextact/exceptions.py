"""Exception types shared across the tactile pipeline."""


class FlextactError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(FlextactError):
    """Two images that must share dimensions do not."""


class UnsupportedRegionError(FlextactError):
    """Poisson integration was asked for a non-rectangular region."""


class NoProprioceptionError(FlextactError):
    """No proprioceptive dots visible; reference matching is impossible."""


class NoContactError(FlextactError):
    """Contact region is below the minimum area for an estimate."""


class AmbiguousOrientationError(FlextactError):
    """Contact region is too round to define a principal axis."""


class EstimationFailedError(FlextactError):
    """Every frame in an estimation batch failed to yield an angle."""


class TableNotFoundError(FlextactError):
    """Descent hit the step limit without the shear threshold tripping."""

    def __init__(self, msg, steps=0, shear_trace=None):
        super().__init__(msg)
        self.steps = steps
        self.shear_trace = list(shear_trace or [])


class InvalidSceneError(FlextactError):
    """Scene description cannot be rendered."""


class LibraryFormatError(FlextactError):
    """Reference library directory is missing, corrupt, or incompatible."""


class PortError(FlextactError):
    """Robot port rejected or failed a command."""
