"""Weakly supervised sequence anomaly detection with cross-batch clustering guidance."""

from wsvad.errors import DataError, NumericalError, ShapeError, WSVADError

__version__ = "0.1.0"

__all__ = ["DataError", "NumericalError", "ShapeError", "WSVADError", "__version__"]
