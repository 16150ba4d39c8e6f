"""Exception hierarchy shared by every layer of the engine."""

from __future__ import annotations


class RPPMError(Exception):
    """Base class for all engine errors."""

    code = "ERROR"


class UnknownNodeError(RPPMError):
    code = "UNKNOWN-NODE"

    def __init__(self, node: str):
        super().__init__(f"unknown node {node!r}")
        self.node = node


class WellFormednessError(RPPMError):
    code = "WELLFORMED"


class ParseError(RPPMError):
    """Malformed textual input.

    ``offset`` is a character offset for path expressions; ``line`` and
    ``column`` are 1-based positions for line-oriented documents.
    """

    code = "PARSE"

    def __init__(
        self,
        message: str,
        *,
        offset: int | None = None,
        line: int | None = None,
        column: int | None = None,
    ):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        if offset is not None:
            where.append(f"offset {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.offset = offset
        self.line = line
        self.column = column


class UnresolvedReferenceError(ParseError):
    pass


class ConfigurationError(RPPMError):
    code = "UNSUPPORTED"


class NameCollisionError(RPPMError):
    pass


class UnknownObjectError(RPPMError, KeyError):
    pass
