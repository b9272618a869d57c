"""Exception types raised across the package."""

from numpy.linalg import LinAlgError


class NotPositiveDefinite(LinAlgError, ValueError):
    pass


class NotSymmetric(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class ZeroVector(ValueError):
    pass


class DegenerateA(RuntimeError):
    """Raised when no acceptably conditioned observation matrix could be drawn."""


class OracleAccessDenied(RuntimeError):
    """A policy asked for hidden quantities (true contexts or mu_star) that were withheld."""


class UndefinedNormalization(ValueError):
    pass


class InsufficientReplications(ValueError):
    pass


class ConfigError(ValueError):
    pass


class ParseError(ConfigError):
    def __init__(self, message: str, key_path: str = "") -> None:
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}" if key_path else message)


class ValidationError(ConfigError):
    pass
