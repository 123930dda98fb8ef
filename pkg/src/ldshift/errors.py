"""Exception hierarchy shared by every module."""


class LDShiftError(Exception):
    """Base class for all library errors."""


class AlphabetMismatch(LDShiftError, ValueError):
    pass


class BudgetExceeded(LDShiftError):
    """An enumeration would visit more words than the configured budget."""


class AbsoluteContinuityError(LDShiftError):
    """Some word has positive mass under one measure and zero under the other."""

    def __init__(self, message, word=None):
        super().__init__(message)
        self.word = word


class ConvergenceError(LDShiftError):
    """A series, bisection or truncation ran out of budget before certifying."""


class CheckFailure(LDShiftError):
    """A verified identity or certificate failed its contract."""


class ConfigError(LDShiftError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
