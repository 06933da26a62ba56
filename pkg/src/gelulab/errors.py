"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(ValueError):
    """A precondition of an operation was violated."""


class ParameterError(ValueError):
    """A numeric parameter is outside its valid range."""


class ConfigurationError(ValueError):
    """A layer, network or experiment configuration is invalid."""


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or infinity."""


class InternalError(RuntimeError):
    """Internal invariant broken (e.g. a cycle in the graph)."""


class IngestionError(OSError):
    """A dataset file is missing or truncated."""


class FormatError(ValueError):
    """A dataset file does not follow the expected binary layout."""
