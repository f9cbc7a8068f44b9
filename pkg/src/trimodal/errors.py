"""Exception hierarchy shared across the pipeline.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
anything else (including InvariantError) -> 3.
"""


class TrimodalError(Exception):
    """Base class for all package errors."""


class ShapeError(TrimodalError):
    """Tensor or layer shapes are incompatible."""


class ConfigError(TrimodalError):
    """A configuration value or file is invalid."""


class DataError(TrimodalError):
    """A manifest, payload file, or label cannot be used."""


class InvariantError(TrimodalError):
    """An internal consistency check failed (bug, not user error)."""
