"""Exception taxonomy shared across the package.

Every error raised on purpose derives from StefanOptError so callers (in
particular the CLI) can map failures to exit codes without string matching.
"""


class StefanOptError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(StefanOptError, ValueError):
    """An argument violates a documented precondition."""


class ConstraintViolationError(StefanOptError, ValueError):
    """A control or configuration value leaves the admissible region."""


class NumericError(StefanOptError, ArithmeticError):
    """A numerical procedure (quadrature, evaluation) failed to produce a finite result."""


class SingularSystemError(NumericError):
    """A per-step linear system lost diagonal dominance; the time step is too large."""

    def __init__(self, message: str, level: int | None = None):
        super().__init__(message)
        self.level = level


class ExpressionError(StefanOptError):
    """Base class for expression engine failures."""


class ExpressionSyntaxError(ExpressionError):
    """Parse failure, carrying the byte offset and the expected token set."""

    def __init__(self, message: str, position: int, expected: tuple[str, ...] = ()):
        super().__init__(f"{message} at offset {position}" + (f" (expected {', '.join(expected)})" if expected else ""))
        self.position = position
        self.expected = expected


class DomainError(ExpressionError, ArithmeticError):
    """Evaluation hit a mathematical domain violation (log of nonpositive, etc.)."""

    def __init__(self, function: str, detail: str):
        super().__init__(f"domain error in {function}: {detail}")
        self.function = function
        self.detail = detail


class ConfigError(StefanOptError):
    """Configuration file is unreadable, malformed, or violates a constraint."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field
