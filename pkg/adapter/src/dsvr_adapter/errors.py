"""Exceptions for the adapter, mirroring the toolkit's exit-code families."""


class AdapterError(Exception):
    """Base class for adapter errors."""


class ValidationError(AdapterError):
    """Input parsed but violates a documented precondition (exit code 2)."""


class FormatError(AdapterError):
    """File does not match the expected format (exit code 3)."""
