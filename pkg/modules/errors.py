# modules/errors.py


class CovkernError(Exception):
    """Base class for data and numeric failures. The CLI maps these to exit code 2."""


class ParseError(CovkernError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DomainError(CovkernError):
    pass


class ParameterError(CovkernError):
    pass


class NumericError(CovkernError):
    pass
