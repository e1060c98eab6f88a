"""Dynamic clustering and cluster contrastive learning on a desk-scale testbed."""

from dccc.errors import (
    ConfigError,
    ContractError,
    DcccError,
    DegenerateEpochError,
    NumericalError,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DcccError",
    "DegenerateEpochError",
    "NumericalError",
]

__version__ = "0.1.0"
