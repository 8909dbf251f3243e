"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Inputs have inconsistent dimensions or violate a precondition."""


class CheiralityError(ValueError):
    """A point fell on or behind the camera plane (non-positive depth)."""

    def __init__(self, message, column=None, video=None, frame=None):
        super().__init__(message)
        self.column = column
        self.video = video
        self.frame = frame


class DegeneracyError(ValueError):
    """Point configuration too degenerate for the requested alignment."""


class InsufficientConstraintsError(ValueError):
    """Not enough valid observations to constrain the estimation."""


class SchemaError(ValueError):
    """A file or in-memory structure does not match its schema."""


class NumericalError(RuntimeError):
    """An optimization failed to make progress."""
