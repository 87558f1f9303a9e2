"""Exception types shared across the package."""


class CrowdModesError(Exception):
    """Base class for errors raised by this package."""


class InvalidInputError(CrowdModesError):
    """Bad user-supplied data or configuration (CLI exit code 1)."""


class ConsistencyError(CrowdModesError):
    """Internal seating bookkeeping no longer self-consistent (CLI exit code 2)."""


class ModelFormatError(InvalidInputError):
    """Model/scenario file is corrupt, truncated or has an unknown version."""
