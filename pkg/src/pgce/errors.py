"""Exception hierarchy. ``exit_code`` is what the CLI returns for each class."""


class PgceError(Exception):
    exit_code = 1


class ConfigError(PgceError, ValueError):
    exit_code = 2


class CapacityError(ConfigError):
    """Oracle enumeration would exceed its trajectory budget."""


class DataError(PgceError, ValueError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ShapeError(DataError):
    pass


class NumericError(PgceError, ArithmeticError):
    exit_code = 4


class DomainError(NumericError):
    """Argument outside a function's domain, e.g. log of a zero probability."""


class DegenerateEpisodeError(NumericError):
    """Strategy returns with zero spread; the Sharpe ratio is undefined."""
