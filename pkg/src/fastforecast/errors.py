"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class FiniteError(FloatingPointError):
    """A tensor acquired a NaN or Inf value, violating the finiteness contract."""


class DataError(ValueError):
    """Malformed or insufficient input data (CSV parsing, short series, ...)."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss and was aborted."""
