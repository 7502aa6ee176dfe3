"""Parser for the model formula mini-language.

Grammar::

    formula  := response "~" term ("+" term)*
    term     := "1" | "-1" | ident | ident "*" ident

``a*b`` expands to the main effects of ``a`` and ``b`` followed by their
interaction, deduplicated against terms already present. The intercept is
implicit unless ``-1`` appears. Nothing fancier (nesting, transforms,
bare ``:`` interactions) is supported.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import FormulaError, UnknownTermForm

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*")


@dataclass(frozen=True)
class Intercept:
    def label(self) -> str:
        return "intercept"


@dataclass(frozen=True)
class Main:
    column: str

    def label(self) -> str:
        return self.column


@dataclass(frozen=True)
class Interaction:
    left: str
    right: str

    def label(self) -> str:
        return f"{self.left}:{self.right}"


Term = Intercept | Main | Interaction


@dataclass(frozen=True)
class Formula:
    """Parsed formula: response column plus an ordered term list."""

    response: str
    terms: tuple[Term, ...]
    has_intercept: bool
    source: str

    def __str__(self) -> str:
        return self.source


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def eof(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)

    def expect(self, literal: str) -> None:
        self.skip_ws()
        if not self.text.startswith(literal, self.pos):
            raise FormulaError(f"expected {literal!r}", position=self.pos)
        self.pos += len(literal)

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def ident(self) -> str:
        self.skip_ws()
        m = _IDENT.match(self.text, self.pos)
        if m is None:
            raise FormulaError("expected identifier", position=self.pos)
        self.pos = m.end()
        return m.group(0)


def parse_formula(text: str) -> Formula:
    """Parse formula text into a :class:`Formula`.

    >>> f = parse_formula("y ~ a*b")
    >>> [t.label() for t in f.terms]
    ['intercept', 'a', 'b', 'a:b']
    """
    sc = _Scanner(text)
    response = sc.ident()
    sc.expect("~")

    explicit: list[Term] = []
    drop_intercept = False
    force_intercept = False

    while True:
        sc.skip_ws()
        if sc.eof():
            raise FormulaError("expected a term", position=sc.pos)
        ch = sc.peek()
        if ch == "-":
            start = sc.pos
            sc.expect("-")
            sc.expect("1")
            drop_intercept = True
            _ = start
        elif ch == "1":
            sc.expect("1")
            force_intercept = True
        elif ch.isdigit():
            raise UnknownTermForm(
                f"unsupported term starting with {ch!r}", position=sc.pos
            )
        else:
            name = sc.ident()
            if sc.peek() == "*":
                sc.expect("*")
                other = sc.ident()
                for t in (Main(name), Main(other), Interaction(name, other)):
                    if t not in explicit:
                        explicit.append(t)
            else:
                t = Main(name)
                if t not in explicit:
                    explicit.append(t)
        if sc.eof():
            break
        sc.expect("+")

    has_intercept = not drop_intercept
    if drop_intercept and force_intercept:
        raise FormulaError("formula mixes '1' and '-1'", position=0)

    terms: tuple[Term, ...]
    if has_intercept:
        terms = (Intercept(), *explicit)
    else:
        terms = tuple(explicit)
    if not terms:
        raise FormulaError("formula has no terms", position=len(text))
    return Formula(
        response=response,
        terms=terms,
        has_intercept=has_intercept,
        source=" ".join(text.split()),
    )
