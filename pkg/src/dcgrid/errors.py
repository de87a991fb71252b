"""Exception types shared across the toolkit."""


class SpecError(ValueError):
    """A network or scenario document violates its schema or invariants.

    `field` carries a dotted path into the offending document, e.g.
    ``lines[3].r``, so callers can point users at the exact entry.
    """

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class NumericalError(RuntimeError):
    """An iterative method failed to converge or a result failed its residual check."""
