"""Exception hierarchy.

Three families map onto CLI exit codes: configuration/usage problems,
data problems, and broken internal invariants.
"""


class DesqError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(DesqError):
    """Invalid configuration or arguments."""


class DataError(DesqError):
    """Input data cannot be used as given."""


class ParseError(DataError):
    pass


class LabelError(DataError):
    pass


class SchemaError(DataError):
    pass


class DatasetUnavailable(DataError):
    pass


class ChecksumError(DataError):
    pass


class DimensionError(DataError, ValueError):
    pass


class LengthMismatch(DimensionError):
    pass


class ZeroNormError(DataError, ValueError):
    """A zero vector has no amplitude encoding."""


class DegenerateError(DataError, ValueError):
    """A Pearson denominator factor vanished."""


class DomainError(ConfigError, ValueError):
    pass


class EmptyInput(DesqError, ValueError):
    pass


class EmptyNode(DesqError, ValueError):
    pass


class EmptyCluster(DesqError, ValueError):
    pass


class InvariantError(DesqError, AssertionError):
    """An internal consistency check failed."""
