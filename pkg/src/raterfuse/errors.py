"""Exception types shared across the library.

The CLI maps each class to a distinct exit code; library code raises them
directly so callers can tell shape problems from numerical ones.
"""


class RaterFuseError(Exception):
    """Base class for all library errors."""


class ShapeMismatchError(RaterFuseError):
    """Operands disagree on grid, class, or rater dimensions."""


class InvalidClassError(RaterFuseError):
    """A class index falls outside [0, K)."""


class DegenerateModelError(RaterFuseError):
    """A posterior normalizer vanished: the model assigns zero likelihood."""


class LogDomainError(RaterFuseError):
    """A probability that must be strictly positive was zero or negative."""


class NumericalFailureError(RaterFuseError):
    """An iterative solver produced a non-finite quantity."""


class FileFormatError(RaterFuseError):
    """A label or probability file violates its declared format."""
