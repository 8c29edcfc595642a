"""Shared exception base so the CLI can map failures to exit codes."""


class ProcalcError(Exception):
    """Base class for all package-specific errors."""
