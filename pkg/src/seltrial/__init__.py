"""Selective-recruitment adaptive trial simulator.

Bayesian logistic-regression posteriors per treatment arm, information-based
candidate utilities, and a recruitment/allocation protocol, plus a Monte-Carlo
trial engine and reporting tools.
"""

from seltrial.errors import (
    ConvergenceError,
    DataFormatError,
    DimensionError,
    DomainError,
    NumericError,
)

__all__ = [
    "ConvergenceError",
    "DataFormatError",
    "DimensionError",
    "DomainError",
    "NumericError",
]

__version__ = "0.1.0"
