"""Errors shared across module boundaries."""


class ConfigError(ValueError):
    """Raised for invalid or inconsistent user-facing configuration."""
