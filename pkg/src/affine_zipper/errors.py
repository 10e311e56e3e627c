"""Exception hierarchy shared by all modules."""


class ZipperError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(ZipperError, ValueError):
    """Inconsistent shapes in a zipper or matrix system."""


class SchemaError(ShapeError):
    """Malformed zipper JSON; ``path`` is the JSON path of the offending node."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class ValidationError(ZipperError):
    """A zipper invariant failed; carries the full validation report."""

    def __init__(self, report):
        super().__init__(report.summary())
        self.report = report


class ParameterError(ZipperError, ValueError):
    """An argument is outside its admissible range."""


class BudgetError(ZipperError):
    """An enumeration or sampling request exceeds the configured budget."""


class NotContractingError(ZipperError):
    """The maps do not jointly contract at the requested check depth."""


class NoRootError(ZipperError):
    """A monotone root search found no sign change on its bracket."""


class SmoothCaseError(ZipperError):
    """The requested quantity is degenerate for a smooth (parabola) de Rham curve."""


class UnreliableDirectionError(ZipperError):
    """Stable directions could not be separated from near-conformal products."""
