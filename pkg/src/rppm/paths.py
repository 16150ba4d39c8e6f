"""Path conditions: AST, textual syntax and reduction to simple form.

Syntax::

    expr    := postfix ("." postfix)*        concatenation
    postfix := prefix "+"*                   one or more repetitions
    prefix  := "~" prefix | atom             reversal
    atom    := "<>" | label | "(" expr ")"
    label   := ident | "allow!" ident | "deny!" ident | "@active" | "@blocked"

``~`` directly in front of a label denotes a reversed edge condition. In
front of anything else it builds a general :class:`Reverse` node, which
:func:`simplify` pushes down to the leaves.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache

from .errors import ParseError


class PathCondition:
    __slots__ = ()

    def __str__(self) -> str:
        return render(self)


@dataclass(frozen=True)
class Diamond(PathCondition):
    pass


@dataclass(frozen=True)
class EdgeCond(PathCondition):
    label: str


@dataclass(frozen=True)
class ReversedEdge(PathCondition):
    label: str


@dataclass(frozen=True)
class Concat(PathCondition):
    left: PathCondition
    right: PathCondition


@dataclass(frozen=True)
class Plus(PathCondition):
    inner: PathCondition


@dataclass(frozen=True)
class Reverse(PathCondition):
    inner: PathCondition


DIAMOND = Diamond()

_IDENT = r"[A-Za-z_][A-Za-z0-9_]*(?:-[A-Za-z0-9_]+)*"
LABEL_RE = re.compile(rf"(?:allow!|deny!){_IDENT}|@active|@blocked|{_IDENT}")
IDENT_RE = re.compile(_IDENT)
_TOKEN_RE = re.compile(rf"\s*(?:(?P<op><>|[.+~()])|(?P<label>{LABEL_RE.pattern}))")


def concat(*parts: PathCondition) -> PathCondition:
    """Right-nested concatenation of one or more conditions."""
    if not parts:
        raise ValueError("concat needs at least one operand")
    result = parts[-1]
    for part in reversed(parts[:-1]):
        result = Concat(part, result)
    return result


def labels_of(pc: PathCondition) -> set[str]:
    """Every edge label mentioned by ``pc``."""
    match pc:
        case EdgeCond(label) | ReversedEdge(label):
            return {label}
        case Concat(left, right):
            return labels_of(left) | labels_of(right)
        case Plus(inner) | Reverse(inner):
            return labels_of(inner)
    return set()


def leaf_count(pc: PathCondition) -> int:
    match pc:
        case EdgeCond() | ReversedEdge():
            return 1
        case Concat(left, right):
            return leaf_count(left) + leaf_count(right)
        case Plus(inner) | Reverse(inner):
            return leaf_count(inner)
    return 0


# -- rendering ---------------------------------------------------------------


def render(pc: PathCondition) -> str:
    match pc:
        case Diamond():
            return "<>"
        case EdgeCond(label):
            return label
        case ReversedEdge(label):
            return "~" + label
        case Concat(left, right):
            lhs = render(left)
            if isinstance(left, Concat):
                lhs = f"({lhs})"
            return f"{lhs} . {render(right)}"
        case Plus(inner):
            body = render(inner)
            if isinstance(inner, Concat):
                body = f"({body})"
            return body + "+"
        case Reverse(inner):
            return f"~({render(inner)})"
    raise TypeError(f"not a path condition: {pc!r}")


# -- parsing -----------------------------------------------------------------


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while True:
            while pos < len(text) and text[pos].isspace():
                pos += 1
            if pos >= len(text):
                break
            m = _TOKEN_RE.match(text, pos)
            if m is None or m.end() == pos:
                raise ParseError(f"unexpected character {text[pos]!r}", offset=pos)
            start = m.start("op") if m.group("op") else m.start("label")
            if m.group("op"):
                self.tokens.append(("op", m.group("op"), start))
            else:
                self.tokens.append(("label", m.group("label"), start))
            pos = m.end()
        self.i = 0

    def peek(self) -> tuple[str, str, int] | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self) -> tuple[str, str, int]:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of path expression", offset=len(self.text))
        self.i += 1
        return tok

    def at(self, value: str) -> bool:
        tok = self.peek()
        return tok is not None and tok[0] == "op" and tok[1] == value

    def parse(self) -> PathCondition:
        if not self.tokens:
            raise ParseError("empty path expression", offset=0)
        pc = self.expr()
        tok = self.peek()
        if tok is not None:
            raise ParseError(f"unexpected {tok[1]!r}", offset=tok[2])
        return pc

    def expr(self) -> PathCondition:
        parts = [self.postfix()]
        while self.at("."):
            self.next()
            parts.append(self.postfix())
        return concat(*parts)

    def postfix(self) -> PathCondition:
        pc = self.prefix()
        while self.at("+"):
            self.next()
            pc = Plus(pc)
        return pc

    def prefix(self) -> PathCondition:
        if self.at("~"):
            self.next()
            tok = self.peek()
            if tok is not None and tok[0] == "label":
                self.next()
                return ReversedEdge(tok[1])
            return Reverse(self.prefix())
        return self.atom()

    def atom(self) -> PathCondition:
        kind, value, offset = self.next()
        if kind == "label":
            return EdgeCond(value)
        if value == "<>":
            return DIAMOND
        if value == "(":
            pc = self.expr()
            if not self.at(")"):
                tok = self.peek()
                raise ParseError("expected ')'", offset=tok[2] if tok else len(self.text))
            self.next()
            return pc
        raise ParseError(f"unexpected {value!r}", offset=offset)


def parse_path(text: str) -> PathCondition:
    """Parse a path expression such as ``"w . s . ~d"``."""
    return _Parser(text).parse()


# -- simplification ----------------------------------------------------------


def _reverse(pc: PathCondition) -> PathCondition:
    # input is already simple
    match pc:
        case Diamond():
            return pc
        case EdgeCond(label):
            return ReversedEdge(label)
        case ReversedEdge(label):
            return EdgeCond(label)
        case Concat(left, right):
            return Concat(_reverse(right), _reverse(left))
        case Plus(inner):
            return Plus(_reverse(inner))
    raise TypeError(f"not a simple path condition: {pc!r}")


@lru_cache(maxsize=4096)
def simplify(pc: PathCondition) -> PathCondition:
    """Rewrite ``pc`` into an equivalent simple path condition.

    Reversal is pushed to the edge conditions and the empty condition is
    removed from concatenations and repetitions.
    """
    match pc:
        case Diamond() | EdgeCond() | ReversedEdge():
            return pc
        case Concat(left, right):
            left, right = simplify(left), simplify(right)
            if isinstance(left, Diamond):
                return right
            if isinstance(right, Diamond):
                return left
            return Concat(left, right)
        case Plus(inner):
            inner = simplify(inner)
            if isinstance(inner, Diamond):
                return inner
            return Plus(inner)
        case Reverse(inner):
            return _reverse(simplify(inner))
    raise TypeError(f"not a path condition: {pc!r}")


def is_simple(pc: PathCondition) -> bool:
    match pc:
        case Diamond() | EdgeCond() | ReversedEdge():
            return True
        case Concat(left, right):
            return (
                not isinstance(left, Diamond)
                and not isinstance(right, Diamond)
                and is_simple(left)
                and is_simple(right)
            )
        case Plus(inner):
            return not isinstance(inner, Diamond) and is_simple(inner)
    return False
