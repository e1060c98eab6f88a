class DcccError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(DcccError, ValueError):
    """Invalid configuration value or malformed config file."""


class ContractError(DcccError, ValueError):
    """A caller violated an operation's precondition (shape, range, label)."""


class NumericalError(DcccError, ArithmeticError):
    """Non-finite values or a degenerate normalization."""


class DegenerateEpochError(DcccError):
    """Too few clusters to build a batch for this epoch."""
