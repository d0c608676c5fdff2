"""Exception hierarchy shared by all modules."""


class ATRError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(ATRError, ValueError):
    """A configuration object violates its invariants."""


class ArgumentError(ATRError, ValueError):
    """An operation received arguments outside its preconditions."""


class DegenerateInputError(ArgumentError):
    """Input is well-formed but carries no usable information (e.g. an all-zero PDP)."""


class StateError(ATRError, RuntimeError):
    """A monitor operation was invoked in a phase that does not allow it."""


class TraceFormatError(ATRError, ValueError):
    """A trace file line could not be parsed."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class TraceVersionError(TraceFormatError):
    """A trace record carries an unsupported schema version."""
