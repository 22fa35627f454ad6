"""Exception hierarchy shared across the package.

Exit-code categories used by the CLI map onto these classes, so keep the
hierarchy flat and stable.
"""


class SnakeRlError(Exception):
    """Base class for all snakerl errors."""


class ConfigError(SnakeRlError):
    """Invalid or inconsistent configuration."""


class DimensionError(SnakeRlError):
    """Array shape or length mismatch."""


class DomainError(SnakeRlError):
    """Argument outside the mathematical domain of an operation."""


class NumericError(SnakeRlError):
    """NaN or Inf encountered in a derived quantity."""


class DataError(SnakeRlError):
    """Invalid dataset contents."""


class FormatError(SnakeRlError):
    """Corrupt, truncated, or version-incompatible file."""


class EpisodeStateError(SnakeRlError):
    """Environment used while in a state that forbids the call."""


class ContractError(SnakeRlError):
    """Caller violated an API contract."""
