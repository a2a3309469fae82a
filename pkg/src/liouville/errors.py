"""Exception hierarchy shared by all modules.

The CLI maps ``ConfigError`` (and its subclasses) to exit code 2 and every
other ``LiouvilleError`` to exit code 1.
"""


class LiouvilleError(Exception):
    """Base class for all library errors."""


class DomainError(LiouvilleError, ValueError):
    """A map, gradient or Jacobian produced non-finite values."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class UnsupportedError(LiouvilleError):
    """Operation not defined for this representation, scheme or configuration."""


class UnsupportedRepresentationError(UnsupportedError):
    pass


class UnsupportedSchemeError(UnsupportedError):
    pass


class UnsupportedPushforwardError(UnsupportedError):
    pass


class InvalidDistributionError(LiouvilleError, ValueError):
    pass


class DegenerateDistributionError(InvalidDistributionError):
    pass


class DuplicatePointsError(LiouvilleError):
    """Zero nearest-neighbor distance; the kNN estimator needs jitter."""


class InvalidTransformError(LiouvilleError, ValueError):
    pass


class ConfigError(LiouvilleError, ValueError):
    """Invalid configuration or usage. ``path`` names the offending key."""

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class RegistryError(ConfigError):
    pass


class InsufficientSamplesError(ConfigError):
    """Fewer samples than the estimator needs (N <= k)."""
