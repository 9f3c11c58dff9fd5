"""Exception types shared across the package."""


class PredbiasError(Exception):
    """Base class for every error raised by this package."""


class DatasetError(PredbiasError):
    """Malformed or internally inconsistent dataset content."""


class VocabularyMismatchError(PredbiasError):
    """An artifact was built against a different vocabulary."""


class ConfigError(PredbiasError):
    """Invalid, incomplete, or infeasible configuration."""


class ArtifactError(PredbiasError):
    """An artifact file cannot be read, verified, or safely written."""
