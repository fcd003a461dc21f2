"""Exception hierarchy shared across the package."""


class CounterpathError(Exception):
    """Base class for all package errors."""


class DataError(CounterpathError):
    """Malformed or inconsistent input data (ingestion, validation, windows)."""


class ModelError(CounterpathError):
    """Model fitting or projection failure (singular systems, divergence)."""
