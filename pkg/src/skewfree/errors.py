"""Exception types raised by the library."""


class StandardizationError(ValueError):
    """Base class for all errors raised by skewfree."""


class EmptyInput(StandardizationError):
    pass


class InsufficientData(StandardizationError):
    pass


class RankDeficient(StandardizationError):
    """The sample is concentrated on a lower-dimensional subspace."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DimensionMismatch(StandardizationError):
    pass


class VersionMismatch(StandardizationError):
    pass


class MalformedDocument(StandardizationError):
    pass
