"""Pratt parser for the expression grammar used in problem files and the CLI.

Grammar::

    t                     independent variable
    u1 .. u9, u{a}        dependent variables
    u{a,k}, d(u{a},k)     k-th derivative of u^a (u{a}' is u{a,1}, primes stack)
    + - * / ^             arithmetic, ^ is right associative
    exp log sin cos arctan sqrt
    p/q, 0.25             exact rational literals
    names                 declared parameters, definitions and aliases
"""

import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

from .exceptions import ExprSyntaxError, JetOrderExceeded, UnknownSymbol
from .expr import (
    FUNCTIONS,
    TIME,
    Const,
    Expr,
    Sym,
    Symbol,
    add,
    apply,
    as_expr,
    dependent,
    div,
    jet,
    mul,
    neg,
    parameter,
    power,
    sub,
)

DEFAULT_Q_MAX = 6


@dataclass(frozen=True)
class ParseContext:
    """Names and bounds an expression is parsed against."""

    n: int
    q_max: int = DEFAULT_Q_MAX
    parameters: Tuple[str, ...] = ()
    definitions: Mapping[str, Expr] = field(default_factory=dict)
    aliases: Mapping[str, Symbol] = field(default_factory=dict)

    def with_definitions(self, definitions: Mapping[str, Expr]) -> "ParseContext":
        merged = dict(self.definitions)
        merged.update(definitions)
        return replace(self, definitions=merged)

    def with_aliases(self, aliases: Mapping[str, Symbol]) -> "ParseContext":
        merged = dict(self.aliases)
        merged.update(aliases)
        return replace(self, aliases=merged)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    offset: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>\d+(?:\.\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^(),{}'])
    """,
    re.VERBOSE,
)

# binding powers
_ADDITIVE = 10
_UNARY = 15
_MULTIPLICATIVE = 20
_POWER = 30
_POSTFIX = 40

_BINARY = {"+": _ADDITIVE, "-": _ADDITIVE, "*": _MULTIPLICATIVE, "/": _MULTIPLICATIVE, "^": _POWER}


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


def tokenize(text: str) -> Iterator[Token]:
    position = 0
    while position < len(text):
        match = _TOKEN_RE.match(text, position)
        if match is None:
            raise ExprSyntaxError(
                f"unexpected character {text[position]!r}", _byte_offset(text, position), text
            )
        kind = match.lastgroup or ""
        if kind != "ws":
            yield Token(kind, match.group(), _byte_offset(text, position))
        position = match.end()
    yield Token("end", "", _byte_offset(text, len(text)))


class Parser:
    """Single-use parser over one input string."""

    def __init__(self, text: str, context: ParseContext):
        self.text = text
        self.context = context
        self.tokens: List[Token] = list(tokenize(text))
        self.position = 0

    @property
    def token(self) -> Token:
        return self.tokens[self.position]

    def advance(self) -> Token:
        current = self.tokens[self.position]
        if current.kind != "end":
            self.position += 1
        return current

    def error(self, message: str, token: Optional[Token] = None) -> ExprSyntaxError:
        token = token or self.token
        return ExprSyntaxError(message, token.offset, self.text)

    def expect(self, text: str) -> Token:
        if self.token.text != text or self.token.kind == "end":
            raise self.error(f"expected {text!r}")
        return self.advance()

    def parse(self) -> Expr:
        if self.token.kind == "end":
            raise self.error("empty expression")
        result = self.expression(0)
        if self.token.kind != "end":
            raise self.error(f"unexpected {self.token.text!r}")
        return result

    def _lbp(self, token: Token) -> int:
        if token.kind != "op":
            return 0
        if token.text == "'":
            return _POSTFIX
        return _BINARY.get(token.text, 0)

    def expression(self, rbp: int) -> Expr:
        token = self.advance()
        left = self.nud(token)
        while rbp < self._lbp(self.token):
            token = self.advance()
            left = self.led(token, left)
        return left

    # prefix position
    def nud(self, token: Token) -> Expr:
        if token.kind == "number":
            return Const(Fraction(token.text))
        if token.kind == "name":
            return self.name(token)
        if token.text == "(":
            inner = self.expression(0)
            self.expect(")")
            return inner
        if token.text == "-":
            return neg(self.expression(_UNARY))
        if token.text == "+":
            return self.expression(_UNARY)
        if token.kind == "end":
            raise self.error("unexpected end of input", token)
        raise self.error(f"unexpected {token.text!r}", token)

    # infix / postfix position
    def led(self, token: Token, left: Expr) -> Expr:
        op = token.text
        if op == "'":
            return self._raise_order(left, 1, token)
        if op == "^":
            exponent_token = self.token
            exponent = self.expression(_POWER - 1)
            if not isinstance(exponent, Const):
                raise self.error("exponent must be a rational constant", exponent_token)
            try:
                return power(left, exponent.value)
            except ValueError as e:
                raise self.error(str(e), exponent_token) from e
        right = self.expression(_BINARY[op])
        if op == "+":
            return add(left, right)
        if op == "-":
            return sub(left, right)
        if op == "*":
            return mul(left, right)
        if isinstance(right, Const) and right.value == 0:
            raise self.error("division by the literal constant 0", token)
        return div(left, right)

    def _integer(self) -> int:
        token = self.advance()
        if token.kind != "number" or not token.text.isdigit():
            raise self.error("expected an integer", token)
        return int(token.text)

    def _state(self, a: int, k: int, token: Token) -> Expr:
        if not 1 <= a <= self.context.n:
            raise UnknownSymbol(f"u{a}", token.offset)
        if k > self.context.q_max:
            raise JetOrderExceeded(k, self.context.q_max)
        return Sym(jet(a, k))

    def _raise_order(self, left: Expr, k: int, token: Token) -> Expr:
        if not (isinstance(left, Sym) and left.symbol.is_state):
            raise self.error("derivative marks apply to dependent variables only", token)
        symbol = left.symbol
        return self._state(symbol.index, symbol.order + k, token)

    def _braced_state(self, token: Token) -> Expr:
        self.expect("{")
        a = self._integer()
        k = 0
        if self.token.text == ",":
            self.advance()
            k = self._integer()
        self.expect("}")
        return self._state(a, k, token)

    def name(self, token: Token) -> Expr:
        text = token.text
        if text in self.context.aliases:
            return Sym(self.context.aliases[text])
        if text in self.context.definitions:
            return self.context.definitions[text]
        if text in self.context.parameters:
            return Sym(parameter(text))
        if text == "t":
            return Sym(TIME)
        if text == "u" and self.token.text == "{":
            return self._braced_state(token)
        if re.fullmatch(r"u\d+", text):
            return self._state(int(text[1:]), 0, token)
        if text == "d" and self.token.text == "(":
            self.advance()
            base_token = self.token
            base = self.expression(0)
            self.expect(",")
            k = self._integer()
            self.expect(")")
            if not (isinstance(base, Sym) and base.symbol.is_state):
                raise self.error("d(.,k) needs a dependent variable", base_token)
            return self._raise_order(base, k, base_token) if k else base
        if text in FUNCTIONS:
            self.expect("(")
            argument = self.expression(0)
            self.expect(")")
            return apply(text, argument)
        raise UnknownSymbol(text, token.offset)


def parse(text: str, context: ParseContext) -> Expr:
    """Parse one expression string."""
    return Parser(text, context).parse()


def parse_many(texts: Sequence[str], context: ParseContext) -> List[Expr]:
    return [parse(text, context) for text in texts]


def parse_value(value: object, context: ParseContext) -> Expr:
    """Accept numbers as well as expression strings (TOML values)."""
    if isinstance(value, str):
        return parse(value, context)
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return as_expr(Fraction(str(value)))
    raise ExprSyntaxError(f"expected an expression, got {type(value).__name__}", 0, str(value))


def parse_definitions(raw: Mapping[str, object], context: ParseContext) -> Dict[str, Expr]:
    """Parse named sub-expressions in declaration order; later ones may use earlier ones."""
    parsed: Dict[str, Expr] = {}
    for name, value in raw.items():
        parsed[name] = parse_value(value, context.with_definitions(parsed))
    return parsed


def default_names(count: int, stem: str = "w") -> Tuple[str, ...]:
    if count == 1:
        return (stem,)
    return tuple(f"{stem}{i}" for i in range(1, count + 1))


def alias_map(names: Sequence[str]) -> Dict[str, Symbol]:
    """Display names for the dependent variables of a derived system."""
    return {name: dependent(i) for i, name in enumerate(names, start=1)}
