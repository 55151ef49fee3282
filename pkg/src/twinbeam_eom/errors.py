"""Shared exception types for twinbeam-eom."""


class TwinBeamError(Exception):
    """Base exception for twinbeam-eom errors."""


class ConfigurationError(TwinBeamError):
    """Error in configuration validation."""


class DomainError(TwinBeamError, ValueError):
    """Physical parameter outside its domain."""


class DimensionError(DomainError):
    """Matrix or vector dimensions do not match."""


class FileProcessingError(TwinBeamError):
    """Error occurred while reading or writing a file."""


class PipelineError(TwinBeamError):
    """A simulation or estimation stage failed."""


class ValidationFailure(TwinBeamError):
    """Statistical validation checks did not pass."""
