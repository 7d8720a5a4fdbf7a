"""Gradient-conflict analysis for multi-task models trained on partially overlapping labels."""

__version__ = "0.1.0"

from ._accel import backend
from .errors import (ConfigError, DataError, GradOverlapError, NumericalError, ParseError,
                     TrainingError)
from .pairwise import PairwiseMatrix

__all__ = [
    "__version__",
    "backend",
    "ConfigError",
    "DataError",
    "GradOverlapError",
    "NumericalError",
    "ParseError",
    "TrainingError",
    "PairwiseMatrix",
]
