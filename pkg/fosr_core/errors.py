"""
FOSR Errors

Exception hierarchy shared by the numerical modules, the file readers and
the command-line front end. Library code raises; only the CLI turns these
into exit codes.
"""


class FosrError(Exception):
    """Base class for every error raised by fosr."""


class DomainError(FosrError, ValueError):
    """An argument lies outside the domain of a function or manifold."""

    def __init__(self, message: str, *, index: int | None = None, reason: str | None = None):
        super().__init__(message)
        self.index = index
        self.reason = reason or message


class InputError(FosrError, ValueError):
    """User-supplied data or arguments violate a precondition."""


class FormatError(InputError):
    """A model file is truncated, corrupt, or of an unsupported version."""

    def __init__(self, message: str, *, section: str | None = None):
        if section:
            message = f"[{section}] {message}"
        super().__init__(message)
        self.section = section


class ConfigError(InputError):
    """A run configuration key is unknown or has an invalid value."""


class NumericalError(FosrError, ArithmeticError):
    """A factorization or decomposition failed numerically."""

    def __init__(self, message: str, *, condition: float | None = None):
        if condition is not None:
            message = f"{message} (condition estimate {condition:.3e})"
        super().__init__(message)
        self.condition = condition


class TuningError(NumericalError):
    """Every candidate of a tuning grid failed."""

    def __init__(self, causes: list[tuple[str, str]]):
        lines = "; ".join(f"{label}: {cause}" for label, cause in causes)
        super().__init__(f"all {len(causes)} tuning candidates failed: {lines}")
        self.causes = causes


class BesselSaturationWarning(RuntimeWarning):
    """K_nu overflowed and was replaced by the largest finite double."""
