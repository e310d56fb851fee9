"""Shared exception types."""


class ConfigurationError(ValueError):
    """Invalid experiment or model configuration (CLI exit code 2)."""


class DomainError(ValueError):
    """Query point outside the domain box."""


class NumericalAbort(RuntimeError):
    """Training or oracle generation hit NaN / divergence (CLI exit code 3)."""
