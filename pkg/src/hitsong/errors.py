"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Input or intermediate tensor has the wrong shape."""


class StateError(RuntimeError):
    """An operation was called out of order (e.g. backward before forward)."""


class TrainingError(RuntimeError):
    """Optimization produced non-finite values."""


class InputError(ValueError):
    """A required model input is missing or malformed."""


class DataValidationError(ValueError):
    """Catalog, tag file or cache contents failed validation."""
