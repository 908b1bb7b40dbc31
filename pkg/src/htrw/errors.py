class HTRWError(Exception):
    """Base class for library errors."""


class DomainError(HTRWError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class CapacityError(HTRWError, ValueError):
    """Requested degree or resolution exceeds what a grid or table supports."""


class ConfigError(HTRWError, ValueError):
    """Inconsistent or invalid configuration."""


class StateError(HTRWError, RuntimeError):
    """Object lacks data required by the operation (e.g. missing spectra)."""


class FormatError(HTRWError, ValueError):
    """Malformed or unsupported data container."""
