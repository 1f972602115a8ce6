"""Exception hierarchy shared by every iupc module."""

from __future__ import annotations


class IupcError(Exception):
    """Base class for all errors raised by iupc."""


class ParseError(IupcError):
    """Malformed input document.

    ``line`` and ``column`` are 1-based; both are ``None`` when the failing
    document has no meaningful position (e.g. invalid JSON structure).
    """

    def __init__(self, message: str, line: int | None = None, column: int | None = None, source: str | None = None):
        self.message = message
        self.line = line
        self.column = column
        self.source = source
        super().__init__(str(self))

    def __str__(self) -> str:
        where = ""
        if self.source:
            where = self.source
        if self.line is not None:
            where += f"{':' if where else ''}{self.line}:{self.column}"
        return f"{where}: {self.message}" if where else self.message


class ModelError(IupcError):
    """A document parsed, but its content breaks a model invariant."""


class BindError(ParseError):
    """A constraint references a pattern variable it never binds."""


class OrderError(IupcError):
    """Trace events violate start/complete pairing."""


class PathExplosion(IupcError):
    """Path enumeration exceeded its configured cap."""


class PatternUnmatched(IupcError):
    """No anchor label of a constraint occurs in the schema under check."""


class NotIntervalDecidable(IupcError):
    """A data condition or guard cannot be reduced to integer intervals."""


class OutOfOrderEvent(IupcError):
    """An event arrived with a timestamp earlier than its predecessor."""


class VersionConflict(IupcError):
    """The base on disk moved on since it was loaded."""


class StaleIdentification(IupcError):
    """The base was mutated after its identification was computed."""
