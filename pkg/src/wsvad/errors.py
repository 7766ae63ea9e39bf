class WSVADError(Exception):
    """Base class for all package errors."""


class ShapeError(WSVADError, ValueError):
    pass


class NumericalError(WSVADError, ArithmeticError):
    """A NaN or Inf appeared where a finite value is required."""


class DataError(WSVADError):
    pass
