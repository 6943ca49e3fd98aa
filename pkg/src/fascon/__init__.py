"""Products of experts with frequently approximately satisfied constraints."""
from .errors import (
    CapacityError, DegenerateConstraintError, DivergenceError, FasError, InvalidInputError, PgmParseError,
)

__version__ = "0.1.0"

__all__ = [
    "CapacityError", "DegenerateConstraintError", "DivergenceError", "FasError", "InvalidInputError",
    "PgmParseError",
]
