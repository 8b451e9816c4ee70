"""Universal term values with a canonical textual form.

Terms are the one value type used throughout the system: source ASTs,
analysis records, compiled units, manifests and the build store all
serialize to the same little grammar:

    term  = appl | int | str | list | tuple
    appl  = IDENT "(" [term {"," term}] ")" | IDENT
    list  = "[" [term {"," term}] "]"
    tuple = "(" term {"," term} ")"

A bare IDENT is an application with zero children.  `(t)` is a 1-tuple;
empty tuples cannot be written and cannot be constructed.  Canonical
printing emits no whitespace anywhere, so two terms are equal exactly
when their printed forms are byte-equal.  Strings escape `\\"`, `\\\\`,
newline and tab; every other character passes through verbatim.
Integers are signed 64-bit.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_\-']*\Z")


@dataclass(frozen=True)
class Appl:
    constructor: str
    children: tuple = ()

    def __post_init__(self):
        if not IDENT_RE.match(self.constructor):
            raise ValueError(f"bad constructor name: {self.constructor!r}")
        object.__setattr__(self, "children", tuple(self.children))


@dataclass(frozen=True)
class IntLit:
    value: int

    def __post_init__(self):
        if not (INT64_MIN <= self.value <= INT64_MAX):
            raise ValueError(f"integer out of 64-bit range: {self.value}")


@dataclass(frozen=True)
class StrLit:
    value: str


@dataclass(frozen=True)
class ListTerm:
    items: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))


@dataclass(frozen=True)
class TupleTerm:
    items: tuple

    def __post_init__(self):
        if not self.items:
            raise ValueError("empty tuples are not representable")
        object.__setattr__(self, "items", tuple(self.items))


Term = Appl | IntLit | StrLit | ListTerm | TupleTerm


def appl(name, *children) -> Appl:
    return Appl(name, children)


def lst(*items) -> ListTerm:
    return ListTerm(items)


def tup(*items) -> TupleTerm:
    return TupleTerm(items)


class ParseError(Exception):
    """Reject with a 1-based position and a description of what was expected."""

    def __init__(self, line: int, col: int, message: str):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col
        self.message = message


_STR_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\t": "\\t"}
_STR_UNESCAPES = {"\\": "\\", '"': '"', "n": "\n", "t": "\t"}
_ESCAPE_RE = re.compile(r'[\\"\n\t]')


def escape_string(s: str) -> str:
    return _ESCAPE_RE.sub(lambda m: _STR_ESCAPES[m.group(0)], s)


def print_term(t: Term) -> str:
    """Render `t` canonically: no whitespace, children comma-separated."""
    parts: list[str] = []
    _print(t, parts)
    return "".join(parts)


def _print(t, parts):
    if isinstance(t, Appl):
        parts.append(t.constructor)
        if t.children:
            parts.append("(")
            _print_seq(t.children, parts)
            parts.append(")")
    elif isinstance(t, IntLit):
        parts.append(str(t.value))
    elif isinstance(t, StrLit):
        parts.append('"')
        parts.append(escape_string(t.value))
        parts.append('"')
    elif isinstance(t, ListTerm):
        parts.append("[")
        _print_seq(t.items, parts)
        parts.append("]")
    elif isinstance(t, TupleTerm):
        parts.append("(")
        _print_seq(t.items, parts)
        parts.append(")")
    else:
        raise TypeError(f"not a Term: {t!r}")


def _print_seq(items, parts):
    for i, item in enumerate(items):
        if i:
            parts.append(",")
        _print(item, parts)


_IDENT_START = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
_IDENT_CONT = _IDENT_START | set("0123456789-'")


class _TermParser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, message, pos=None):
        pos = self.pos if pos is None else pos
        line = self.text.count("\n", 0, pos) + 1
        col = pos - (self.text.rfind("\n", 0, pos) + 1) + 1
        raise ParseError(line, col, message)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self):
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch):
        if self.peek() != ch:
            self.error(f"expected {ch!r}")
        self.pos += 1

    def term(self) -> Term:
        self.skip_ws()
        c = self.peek()
        if c == "":
            self.error("expected a term, found end of input")
        if c == "[":
            self.pos += 1
            items = self.seq("]")
            return ListTerm(items)
        if c == "(":
            self.pos += 1
            items = self.seq(")")
            if not items:
                self.error("empty tuple is not a term", self.pos - 1)
            return TupleTerm(items)
        if c == '"':
            return StrLit(self.string())
        if c == "-" or c.isdigit():
            return IntLit(self.integer())
        if c in _IDENT_START:
            name = self.ident()
            self.skip_ws()
            if self.peek() == "(":
                self.pos += 1
                return Appl(name, self.seq(")"))
            return Appl(name, ())
        self.error(f"expected a term, found {c!r}")

    def seq(self, close) -> tuple:
        self.skip_ws()
        if self.peek() == close:
            self.pos += 1
            return ()
        items = [self.term()]
        self.skip_ws()
        while self.peek() == ",":
            self.pos += 1
            items.append(self.term())
            self.skip_ws()
        if self.peek() != close:
            self.error(f"expected {close!r} or ','")
        self.pos += 1
        return tuple(items)

    def ident(self) -> str:
        start = self.pos
        self.pos += 1
        text = self.text
        while self.pos < len(text) and text[self.pos] in _IDENT_CONT:
            self.pos += 1
        return text[start : self.pos]

    def integer(self) -> int:
        start = self.pos
        if self.peek() == "-":
            self.pos += 1
        if not self.peek().isdigit():
            self.error("expected a digit")
        while self.peek().isdigit():
            self.pos += 1
        value = int(self.text[start : self.pos])
        if not (INT64_MIN <= value <= INT64_MAX):
            self.error(f"integer out of 64-bit range: {value}", start)
        return value

    def string(self) -> str:
        self.pos += 1  # opening quote
        out = []
        text = self.text
        while True:
            if self.pos >= len(text):
                self.error("unterminated string")
            c = text[self.pos]
            if c == '"':
                self.pos += 1
                return "".join(out)
            if c == "\\":
                self.pos += 1
                if self.pos >= len(text):
                    self.error("unterminated escape")
                esc = text[self.pos]
                if esc not in _STR_UNESCAPES:
                    self.error(f"unknown escape \\{esc}", self.pos - 1)
                out.append(_STR_UNESCAPES[esc])
                self.pos += 1
            else:
                out.append(c)
                self.pos += 1


def parse_term(text: str) -> Term:
    """Parse the unique term denoted by `text`, consuming the whole input."""
    p = _TermParser(text)
    t = p.term()
    p.skip_ws()
    if p.pos != len(text):
        p.error("trailing input after term")
    return t


def term_digest(t: Term) -> str:
    return hashlib.sha256(print_term(t).encode("utf-8")).hexdigest()


@dataclass
class FreshNames:
    """Monotone counter for compiler- or runtime-generated names.

    Every call returns `<prefix><n>` with a strictly increasing n, so no
    name is ever handed out twice by the same counter.
    """

    _n: int = field(default=0)

    def next(self, prefix: str) -> str:
        name = f"{prefix}{self._n}"
        self._n += 1
        return name


def fresh_name(counter: FreshNames, prefix: str) -> str:
    return counter.next(prefix)
