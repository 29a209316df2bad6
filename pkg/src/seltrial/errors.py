"""Exception types shared across the package."""


class SeltrialError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(SeltrialError, ValueError):
    """Inputs have inconsistent or unsupported dimensions."""


class DomainError(SeltrialError, ValueError):
    """A value lies outside its mathematically valid domain."""


class ConvergenceError(SeltrialError, RuntimeError):
    """An iterative procedure failed to converge within its budget."""


class NumericError(SeltrialError, RuntimeError):
    """A numerical operation produced an unusable result (singularity, overflow)."""


class DataFormatError(SeltrialError, ValueError):
    """An input file or record does not match the expected layout."""
