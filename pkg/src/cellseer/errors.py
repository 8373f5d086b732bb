"""Exception hierarchy shared by every cellseer module."""


class CellseerError(Exception):
    """Base class for all errors raised by cellseer."""


class DataError(CellseerError):
    """Input data violates a precondition (bad range, gap, missing file...)."""


class FormatError(DataError):
    """A binary file could not be decoded.

    ``field`` names the header/manifest field that was wrong, ``expected`` and
    ``found`` carry the two values when they are meaningful.
    """

    def __init__(self, message, field=None, expected=None, found=None):
        self.field = field
        self.expected = expected
        self.found = found
        parts = [message]
        if field is not None:
            parts.append(f"field={field}")
        if expected is not None or found is not None:
            parts.append(f"expected={expected!r} found={found!r}")
        super().__init__(" | ".join(parts))


class ShapeError(CellseerError, ValueError):
    """Array shapes do not match what a layer or file manifest expects."""

    def __init__(self, message, expected=None, found=None):
        self.expected = expected
        self.found = found
        if expected is not None or found is not None:
            message = f"{message} (expected {expected}, found {found})"
        super().__init__(message)


class IdentifiabilityError(CellseerError):
    """A least-squares design matrix is rank deficient."""


class NumericalError(CellseerError):
    """Non-finite values appeared during optimization or evaluation."""
