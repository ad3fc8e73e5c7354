"""Package-level exception types."""


class CotrackError(Exception):
    """Base class for errors raised by this package."""


class CalibrationError(CotrackError):
    """Step-length calibration could not be performed (no steps detected)."""


class PayloadError(CotrackError):
    """A radio advertisement payload is malformed."""


class ScenarioError(CotrackError):
    """A scenario file or scenario value failed validation.

    `field` names the offending scenario field when known, so front ends can
    produce a precise diagnostic.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field
