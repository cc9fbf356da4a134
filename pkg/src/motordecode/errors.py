"""Exception hierarchy shared across the toolkit.

The CLI maps these to exit codes: ConfigError -> 2, DataError (and
subclasses) -> 3, ConvergenceError -> 4.
"""


class MotordecodeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(MotordecodeError):
    """Invalid configuration value, file, or CLI argument combination."""


class DataError(MotordecodeError):
    """Problem with input data (files, channels, events, shapes)."""


class EdfParseError(DataError):
    """Malformed EDF byte stream.

    ``offset`` is the byte position at which parsing failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class EdfIntegrityError(DataError):
    """Header fields are internally inconsistent with the file contents."""


class EventDecodeError(DataError):
    """Annotation labels cannot be decoded into movement events."""


class ConvergenceError(MotordecodeError):
    """An iterative numerical routine failed to converge.

    ``diagnostics`` carries solver state useful for post-mortem analysis.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
