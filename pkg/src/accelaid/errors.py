"""Exception types raised across the package."""


class AccelAidError(Exception):
    """Base class for all package errors."""


class DomainError(AccelAidError, ValueError):
    """Input outside the domain where a formula or approximation is valid."""


class SmallAngleError(DomainError):
    """Misalignment correction too large for the small-angle error model."""


class AttitudeError(DomainError):
    """Rotation matrix is not orthonormal with determinant +1."""


class SingularInnovationError(AccelAidError, ArithmeticError):
    """Innovation covariance is numerically singular."""


class CovarianceError(AccelAidError, ArithmeticError):
    """Covariance lost symmetry or positive semi-definiteness."""


class WindowError(AccelAidError, ValueError):
    """GNSS fix window misuse (ordering, fill level or rank)."""


class DatasetError(AccelAidError):
    """Base class for dataset ingestion errors."""


class MissingFileError(DatasetError, FileNotFoundError):
    pass


class MonotonicityError(DatasetError, ValueError):
    pass


class NanFieldError(DatasetError, ValueError):
    pass


class MalformedRowError(DatasetError, ValueError):
    pass


class ConfigError(AccelAidError, ValueError):
    """Invalid run configuration. ``errors`` maps field name to message."""

    def __init__(self, errors):
        self.errors = dict(errors)
        msg = "; ".join(f"{k}: {v}" for k, v in self.errors.items())
        super().__init__(msg)
