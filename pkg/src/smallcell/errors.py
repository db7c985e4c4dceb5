"""Exception types shared across the package."""


class NumericalError(RuntimeError):
    """A numerical routine failed to reach its requested accuracy.

    Attributes:
        error_estimate: Best error estimate achieved before giving up, if any.
        index: Coefficient index being evaluated when the failure happened.
    """

    def __init__(self, message, error_estimate=None, index=None):
        super().__init__(message)
        self.error_estimate = error_estimate
        self.index = index


class UnsupportedSizeError(ValueError):
    """Requested problem size exceeds what an enumeration routine supports."""


class NoTaggedUser(RuntimeError):
    """A network realization contained no users to tag."""
