"""Exception hierarchy shared by every module of the package."""


class BBCUError(Exception):
    """Base class for all package errors."""


class ParameterError(BBCUError, ValueError):
    """A plant or controller parameter is out of its admissible range."""


class DomainError(BBCUError, ValueError):
    """A function was evaluated outside its domain."""


class InfeasibleError(BBCUError):
    """A reference or design problem admits no solution."""


class HypothesisError(BBCUError):
    """A stability theorem hypothesis is violated.

    ``failed`` lists the human-readable inequalities that do not hold.
    """

    def __init__(self, failed):
        self.failed = list(failed)
        super().__init__("hypothesis violated: " + "; ".join(self.failed))


class NumericError(BBCUError, ArithmeticError):
    """The simulation produced a non-finite state."""

    def __init__(self, message, t=None):
        self.t = t
        if t is not None:
            message = f"{message} (t = {t:.9g} s)"
        super().__init__(message)


class ConfigError(BBCUError, ValueError):
    """Scenario configuration could not be parsed or validated."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
