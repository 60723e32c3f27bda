"""prunet: PRU, LSTM, and GRU recurrent cells built from scratch on
float64 numpy, with exact backpropagation through time, state-space
system tooling, synthetic sequence benchmarks, and a config-driven
experiment harness."""

from . import cells, numerics, optim, statespace, tasks, verification
from .errors import ConfigError, DataError, NumericError, ShapeError

__version__ = "0.1.0"

__all__ = [
    "cells",
    "numerics",
    "optim",
    "statespace",
    "tasks",
    "verification",
    "ConfigError",
    "DataError",
    "NumericError",
    "ShapeError",
    "__version__",
]
