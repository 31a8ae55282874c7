"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration or infeasible experiment setup."""


class ShapeError(ValueError):
    """Dimension mismatch between arrays that must be shape-congruent."""


class DataFormatError(ValueError):
    """Malformed data file (bad magic, truncation, count mismatch)."""
