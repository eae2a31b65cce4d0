"""Exception hierarchy. The CLI maps these classes onto exit codes."""


class ModelFitError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 2


class ExprError(ModelFitError, ValueError):
    pass


class ParseError(ExprError):
    """Syntax error in model text; ``position`` is a 0-based character offset."""

    def __init__(self, message, position=None, text=None):
        self.position = position
        self.text = text
        if position is not None:
            message = f"{message} at position {position}"
            if text is not None:
                message += f"\n  {text}\n  {' ' * position}^"
        super().__init__(message)


class UndeclaredSymbolError(ExprError):
    pass


class DimensionError(ModelFitError, ValueError):
    pass


class DataError(ModelFitError, ValueError):
    pass


class ConfigError(ModelFitError, ValueError):
    pass


class DomainError(ModelFitError, ValueError):
    """Evaluation requested outside the domain a trajectory covers."""


class NumericError(ModelFitError, ArithmeticError):
    """A non-finite value appeared where a finite one is required."""

    exit_code = 3


class LipschitzError(NumericError):
    def __init__(self, message, point=None):
        self.point = point
        super().__init__(message)


class CertificateError(NumericError):
    pass
