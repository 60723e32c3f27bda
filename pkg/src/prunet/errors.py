"""Exception types shared across the library.

The CLI maps these onto distinct exit codes (config = 2, data = 3,
numeric = 4), so failure causes stay distinguishable in scripts.
"""


class ShapeError(ValueError):
    """Operand dimensions are inconsistent."""


class ConfigError(ValueError):
    """An experiment config is malformed or incomplete."""


class DataError(ValueError):
    """A data file is missing, malformed, or inconsistent."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values."""
