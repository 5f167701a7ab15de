"""Exception hierarchy shared by every dichoscope module."""


class DichoscopeError(Exception):
    """Base class for all toolkit errors."""


class DomainError(DichoscopeError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class EvalError(DichoscopeError, ArithmeticError):
    """Numeric evaluation of an expression failed (pole, bad log, NaN...)."""


class ParseError(DichoscopeError, ValueError):
    """Malformed expression text.

    ``offset`` is the byte offset of the offending token and ``expected``
    the set of token kinds that would have been accepted there.
    """

    def __init__(self, message, offset, expected=()):
        self.offset = offset
        self.expected = frozenset(expected)
        detail = f"{message} at offset {offset}"
        if self.expected:
            detail += f" (expected one of: {', '.join(sorted(self.expected))})"
        super().__init__(detail)


class IntegrationError(DichoscopeError, RuntimeError):
    """Step-size control failed or the step budget was exhausted."""


class ConfigError(DichoscopeError, ValueError):
    """Invalid analysis configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
