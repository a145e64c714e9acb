"""Exception hierarchy shared by every module."""


class SluError(Exception):
    """Base class for all package errors."""


class ShapeError(SluError, ValueError):
    pass


class EmptyInputError(SluError, ValueError):
    pass


class NumericError(SluError, ArithmeticError):
    pass


class FormatError(SluError, ValueError):
    """A file on disk does not follow its declared text format."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


class ValidationError(SluError, ValueError):
    """A corpus record violates the schema."""

    def __init__(self, message, utterance_id=None):
        prefix = f"utterance {utterance_id!r}: " if utterance_id is not None else ""
        super().__init__(prefix + message)
        self.utterance_id = utterance_id


class ConfigError(SluError, ValueError):
    pass


class DataError(SluError, ValueError):
    pass


class TooShortError(SluError, ValueError):
    pass
