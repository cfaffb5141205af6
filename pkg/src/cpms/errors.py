"""Exception types shared across the package."""


class CpmsError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CpmsError, ValueError):
    """Invalid construction parameter or run configuration.

    ``field`` names the offending parameter when it is known.
    """

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SolverError(CpmsError, RuntimeError):
    """A numerical iteration failed to reach its tolerance."""

    def __init__(self, message, residual=None, history=None):
        self.residual = residual
        self.history = list(history) if history is not None else []
        super().__init__(message)


class InnerSolveError(SolverError):
    """Newton / fixed-point inner iteration did not converge."""


class PicardError(SolverError):
    """The McKean-Vlasov law iteration exhausted its iteration budget."""
