"""Exception hierarchy shared by all toolkit modules."""

from __future__ import annotations


class TelelatError(Exception):
    """Base class for toolkit errors."""


class UsageError(TelelatError, ValueError):
    """An operation was called outside its preconditions."""


class ConfigError(TelelatError, ValueError):
    """Invalid detector, clock or pipeline configuration."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class LogParseError(TelelatError, ValueError):
    """A line of an event log could not be parsed."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class LogValidationError(TelelatError, ValueError):
    """An event log parsed but violates a structural rule (duplicates, domains)."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class DomainError(TelelatError):
    """Timestamps from different clock domains were combined without alignment."""


class DetectionFailure(TelelatError):
    """The motion detector found no event where one was required."""


class NegativeResidualError(TelelatError):
    """Measured components exceed the total they are attributed against."""

    def __init__(self, chain: str, deficit_ms: float):
        self.chain = chain
        self.deficit_ms = deficit_ms
        super().__init__(
            f"{chain}: measured components exceed total by {deficit_ms:.3f} ms"
        )
