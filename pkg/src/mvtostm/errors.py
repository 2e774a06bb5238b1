"""Exception types shared across the package."""


class StmError(Exception):
    """Base class for every error this package raises deliberately."""


class ConfigError(StmError, ValueError):
    """Invalid configuration: object count, gc threshold, workload shape."""


class UsageError(StmError):
    """API misuse: an operation was invoked in a state that forbids it."""


class InvariantViolation(StmError, RuntimeError):
    """An internal consistency check failed. Indicates a bug, not bad input."""


class HistoryFormatError(StmError, ValueError):
    """A history file could not be parsed or is not well formed."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ReplayError(StmError, ValueError):
    """A replay script could not be parsed or references undefined state."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no
