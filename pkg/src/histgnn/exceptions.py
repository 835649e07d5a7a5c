"""Exception hierarchy shared across the package."""


class InputError(ValueError):
    """Invalid argument or malformed input data."""


class ParseError(InputError):
    """A file could not be parsed; carries the offending line when known."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class SchemaError(InputError):
    """Files are individually valid but inconsistent with each other."""


class StateError(RuntimeError):
    """An object was used in a state that does not permit the operation."""


class NumericalError(ArithmeticError):
    """A computation produced NaN or infinite values."""
