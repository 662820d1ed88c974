"""Immutable symbolic expression trees over a jet coordinate system.

Expressions are built through the smart constructors (:func:`add`, :func:`mul`,
:func:`div`, :func:`power`, :func:`neg`, :func:`apply`) which only perform
light local rewrites: dropping neutral elements, folding rational constants
and flattening nested sums and products. There is no canonical simplifier;
identities are decided by sampling (see :mod:`symmetry_reduction.sampling`).
"""

import math
from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction
from typing import (
    Callable,
    ClassVar,
    Dict,
    FrozenSet,
    Iterable,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np

from .exceptions import DomainError, PoleError, UnknownSymbol

DEFAULT_POLE_GUARD = 1e-12

FUNCTIONS = ("exp", "log", "sin", "cos", "arctan", "sqrt")


class SymbolKind(IntEnum):
    TIME = 0
    DEPENDENT = 1
    JET = 2
    PARAMETER = 3


@dataclass(frozen=True, order=True)
class Symbol:
    """A coordinate of jet space (t, u^a, u^a_k) or a named parameter."""

    kind: SymbolKind
    index: int = 0
    order: int = 0
    name: str = ""

    @property
    def is_state(self) -> bool:
        """True for u^a and its jets."""
        return self.kind in (SymbolKind.DEPENDENT, SymbolKind.JET)

    @property
    def label(self) -> str:
        if self.kind is SymbolKind.TIME:
            return "t"
        if self.kind is SymbolKind.PARAMETER:
            return self.name
        if self.kind is SymbolKind.DEPENDENT:
            return f"u{self.index}" if self.index < 10 else f"u{{{self.index}}}"
        return f"u{{{self.index},{self.order}}}"

    def raised(self, k: int = 1) -> "Symbol":
        """The jet coordinate k orders above this one."""
        if not self.is_state:
            raise ValueError(f"{self.label} has no derivatives")
        return jet(self.index, self.order + k)

    def __str__(self) -> str:
        return self.label


TIME = Symbol(SymbolKind.TIME, name="t")


def dependent(a: int) -> Symbol:
    return Symbol(SymbolKind.DEPENDENT, a, 0)


def jet(a: int, k: int) -> Symbol:
    """u^a_k; order 0 is the dependent variable itself."""
    if k == 0:
        return dependent(a)
    return Symbol(SymbolKind.JET, a, k)


def parameter(name: str) -> Symbol:
    return Symbol(SymbolKind.PARAMETER, name=name)


ExprLike = Union["Expr", Symbol, int, Fraction, float]


class Expr:
    """Base class of all expression nodes."""

    precedence: ClassVar[int] = 100

    def children(self) -> Tuple["Expr", ...]:
        return ()

    def _key(self) -> tuple:
        raise NotImplementedError

    def __hash__(self) -> int:
        cached = self.__dict__.get("_hash")
        if cached is None:
            cached = hash((type(self).__name__, self._key()))
            object.__setattr__(self, "_hash", cached)
        return cached

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if type(self) is not type(other) or hash(self) != hash(other):
            return False
        return self._key() == other._key()  # type: ignore[attr-defined]

    def __ne__(self, other: object) -> bool:
        return not self == other

    @property
    def free_symbols(self) -> FrozenSet[Symbol]:
        cached = self.__dict__.get("_free")
        if cached is None:
            cached = frozenset().union(*(c.free_symbols for c in self.children()))
            object.__setattr__(self, "_free", cached)
        return cached

    def __add__(self, other: ExprLike) -> "Expr":
        return add(self, other)

    def __radd__(self, other: ExprLike) -> "Expr":
        return add(other, self)

    def __sub__(self, other: ExprLike) -> "Expr":
        return add(self, neg(as_expr(other)))

    def __rsub__(self, other: ExprLike) -> "Expr":
        return add(other, neg(self))

    def __mul__(self, other: ExprLike) -> "Expr":
        return mul(self, other)

    def __rmul__(self, other: ExprLike) -> "Expr":
        return mul(other, self)

    def __truediv__(self, other: ExprLike) -> "Expr":
        return div(self, other)

    def __rtruediv__(self, other: ExprLike) -> "Expr":
        return div(other, self)

    def __neg__(self) -> "Expr":
        return neg(self)

    def __pow__(self, exponent: Union[int, Fraction]) -> "Expr":
        return power(self, exponent)

    def __str__(self) -> str:
        return render(self)

    def __repr__(self) -> str:
        return f"{type(self).__name__}<{render(self)}>"


@dataclass(frozen=True, eq=False, repr=False)
class Const(Expr):
    value: Fraction

    def _key(self) -> tuple:
        return (self.value,)

    @property
    def free_symbols(self) -> FrozenSet[Symbol]:
        return frozenset()


@dataclass(frozen=True, eq=False, repr=False)
class Sym(Expr):
    symbol: Symbol

    def _key(self) -> tuple:
        return (self.symbol,)

    @property
    def free_symbols(self) -> FrozenSet[Symbol]:
        return frozenset((self.symbol,))


@dataclass(frozen=True, eq=False, repr=False)
class Add(Expr):
    terms: Tuple[Expr, ...]
    precedence: ClassVar[int] = 10

    def children(self) -> Tuple[Expr, ...]:
        return self.terms

    def _key(self) -> tuple:
        return self.terms


@dataclass(frozen=True, eq=False, repr=False)
class Mul(Expr):
    factors: Tuple[Expr, ...]
    precedence: ClassVar[int] = 20

    def children(self) -> Tuple[Expr, ...]:
        return self.factors

    def _key(self) -> tuple:
        return self.factors


@dataclass(frozen=True, eq=False, repr=False)
class Div(Expr):
    num: Expr
    den: Expr
    precedence: ClassVar[int] = 20

    def children(self) -> Tuple[Expr, ...]:
        return (self.num, self.den)

    def _key(self) -> tuple:
        return (self.num, self.den)


@dataclass(frozen=True, eq=False, repr=False)
class Pow(Expr):
    base: Expr
    exponent: Fraction
    precedence: ClassVar[int] = 30

    def children(self) -> Tuple[Expr, ...]:
        return (self.base,)

    def _key(self) -> tuple:
        return (self.base, self.exponent)


@dataclass(frozen=True, eq=False, repr=False)
class Neg(Expr):
    child: Expr
    precedence: ClassVar[int] = 15

    def children(self) -> Tuple[Expr, ...]:
        return (self.child,)

    def _key(self) -> tuple:
        return (self.child,)


@dataclass(frozen=True, eq=False, repr=False)
class Apply(Expr):
    func: str
    arg: Expr

    def children(self) -> Tuple[Expr, ...]:
        return (self.arg,)

    def _key(self) -> tuple:
        return (self.func, self.arg)


ZERO = Const(Fraction(0))
ONE = Const(Fraction(1))


def const(value: Union[int, Fraction, str]) -> Const:
    return Const(Fraction(value))


def sym(symbol: Symbol) -> Sym:
    return Sym(symbol)


def as_expr(value: ExprLike) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, Symbol):
        return Sym(value)
    if isinstance(value, bool):
        raise TypeError("booleans are not expressions")
    if isinstance(value, (int, Fraction)):
        return Const(Fraction(value))
    if isinstance(value, float):
        return Const(Fraction(value))
    raise TypeError(f"cannot convert {type(value).__name__} to an expression")


def is_const(e: Expr, value: Optional[Union[int, Fraction]] = None) -> bool:
    if not isinstance(e, Const):
        return False
    return value is None or e.value == value


# -- smart constructors ---------------------------------------------------------


def add(*terms: ExprLike) -> Expr:
    flat: List[Optional[Expr]] = []
    total = Fraction(0)
    const_slot: Optional[int] = None
    for term in terms:
        term = as_expr(term)
        parts = term.terms if isinstance(term, Add) else (term,)
        for part in parts:
            if isinstance(part, Const):
                if const_slot is None:
                    const_slot = len(flat)
                    flat.append(None)
                total += part.value
            else:
                flat.append(part)
    if const_slot is not None:
        if total != 0:
            flat[const_slot] = Const(total)
        else:
            del flat[const_slot]
    items = [item for item in flat if item is not None]
    if not items:
        return ZERO
    if len(items) == 1:
        return items[0]
    return Add(tuple(items))


def mul(*factors: ExprLike) -> Expr:
    coefficient = Fraction(1)
    flat: List[Expr] = []
    for factor in factors:
        factor = as_expr(factor)
        parts = factor.factors if isinstance(factor, Mul) else (factor,)
        for part in parts:
            if isinstance(part, Const):
                coefficient *= part.value
            elif isinstance(part, Neg):
                coefficient = -coefficient
                flat.append(part.child)
            else:
                flat.append(part)
    if coefficient == 0:
        return ZERO
    if not flat:
        return Const(coefficient)
    if coefficient == 1:
        return flat[0] if len(flat) == 1 else Mul(tuple(flat))
    if coefficient == -1 and len(flat) == 1:
        return Neg(flat[0])
    return Mul((Const(coefficient),) + tuple(flat))


def neg(e: ExprLike) -> Expr:
    e = as_expr(e)
    if isinstance(e, Const):
        return Const(-e.value)
    if isinstance(e, Neg):
        return e.child
    if isinstance(e, Mul):
        return mul(Const(Fraction(-1)), e)
    return Neg(e)


def sub(a: ExprLike, b: ExprLike) -> Expr:
    return add(a, neg(as_expr(b)))


def div(num: ExprLike, den: ExprLike) -> Expr:
    num, den = as_expr(num), as_expr(den)
    if isinstance(den, Const):
        if den.value == 0:
            raise PoleError("division by the literal constant 0", subexpression=num)
        return mul(Const(1 / den.value), num)
    if is_const(num, 0):
        return ZERO
    return Div(num, den)


def _exact_root(value: Fraction) -> Optional[Fraction]:
    if value < 0:
        return None
    num_root = math.isqrt(value.numerator)
    den_root = math.isqrt(value.denominator)
    if num_root * num_root == value.numerator and den_root * den_root == value.denominator:
        return Fraction(num_root, den_root)
    return None


def power(base: ExprLike, exponent: Union[int, Fraction]) -> Expr:
    base = as_expr(base)
    exponent = Fraction(exponent)
    if (2 * exponent).denominator != 1:
        raise ValueError(f"exponent {exponent} is not an integer or half-integer")
    if exponent == 0:
        return ONE
    if exponent == 1:
        return base
    if is_const(base, 1):
        return ONE
    if isinstance(base, Const):
        if base.value == 0:
            if exponent < 0:
                raise PoleError("zero raised to a negative power", subexpression=base)
            return ZERO
        if exponent.denominator == 1:
            return Const(base.value ** int(exponent))
        root = _exact_root(base.value)
        if root is not None:
            return Const(root ** int(2 * exponent))
    return Pow(base, exponent)


def apply(func: str, arg: ExprLike) -> Expr:
    if func not in FUNCTIONS:
        raise ValueError(f"unknown function {func!r}")
    arg = as_expr(arg)
    if isinstance(arg, Const):
        folded = {
            ("exp", 0): 1,
            ("log", 1): 0,
            ("sin", 0): 0,
            ("cos", 0): 1,
            ("arctan", 0): 0,
        }.get((func, arg.value))
        if folded is not None:
            return Const(Fraction(folded))
        if func == "sqrt":
            root = _exact_root(arg.value)
            if root is not None:
                return Const(root)
    return Apply(func, arg)


def sqrt(arg: ExprLike) -> Expr:
    return apply("sqrt", arg)


# -- structural helpers -------------------------------------------------------------


def jet_order(e: Expr) -> int:
    """Highest derivative order among the jet symbols of e (0 if none)."""
    return max((s.order for s in e.free_symbols if s.is_state), default=0)


def count_nodes(e: Expr) -> int:
    seen = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.extend(node.children())
    return len(seen)


def _rebuild(node: Expr, children: Sequence[Expr]) -> Expr:
    if isinstance(node, Add):
        return add(*children)
    if isinstance(node, Mul):
        return mul(*children)
    if isinstance(node, Div):
        return div(children[0], children[1])
    if isinstance(node, Pow):
        return power(children[0], node.exponent)
    if isinstance(node, Neg):
        return neg(children[0])
    if isinstance(node, Apply):
        return apply(node.func, children[0])
    return node


# -- differentiation ------------------------------------------------------------------


def diff(e: Expr, s: Symbol) -> Expr:
    """Exact partial derivative; all jet coordinates are independent."""
    memo: Dict[int, Tuple[Expr, Expr]] = {}

    def walk(node: Expr) -> Expr:
        if s not in node.free_symbols:
            return ZERO
        hit = memo.get(id(node))
        if hit is not None:
            return hit[1]
        result = _diff_node(node, s, walk)
        memo[id(node)] = (node, result)
        return result

    return walk(e)


def _diff_node(node: Expr, s: Symbol, walk: Callable[[Expr], Expr]) -> Expr:
    if isinstance(node, Sym):
        return ONE if node.symbol == s else ZERO
    if isinstance(node, Add):
        return add(*(walk(t) for t in node.terms))
    if isinstance(node, Mul):
        terms = []
        for i, factor in enumerate(node.factors):
            d = walk(factor)
            if is_const(d, 0):
                continue
            terms.append(mul(*node.factors[:i], d, *node.factors[i + 1:]))
        return add(*terms)
    if isinstance(node, Div):
        dn, dd = walk(node.num), walk(node.den)
        if is_const(dd, 0):
            return div(dn, node.den)
        numerator = sub(mul(dn, node.den), mul(node.num, dd))
        return div(numerator, power(node.den, 2))
    if isinstance(node, Pow):
        db = walk(node.base)
        return mul(Const(node.exponent), power(node.base, node.exponent - 1), db)
    if isinstance(node, Neg):
        return neg(walk(node.child))
    if isinstance(node, Apply):
        x = node.arg
        dx = walk(x)
        if node.func == "exp":
            outer: Expr = node
        elif node.func == "log":
            return div(dx, x)
        elif node.func == "sin":
            outer = apply("cos", x)
        elif node.func == "cos":
            outer = neg(apply("sin", x))
        elif node.func == "arctan":
            return div(dx, add(ONE, power(x, 2)))
        else:
            return div(dx, mul(Const(Fraction(2)), node))
        return mul(outer, dx)
    return ZERO


# -- substitution ---------------------------------------------------------------------


def substitute(e: Expr, bindings: Mapping[Symbol, ExprLike]) -> Expr:
    """Simultaneous, non-iterated substitution of symbols by expressions."""
    if not bindings:
        return e
    targets = {k: as_expr(v) for k, v in bindings.items()}
    keys = frozenset(targets)
    memo: Dict[int, Tuple[Expr, Expr]] = {}

    def walk(node: Expr) -> Expr:
        if not (node.free_symbols & keys):
            return node
        hit = memo.get(id(node))
        if hit is not None:
            return hit[1]
        if isinstance(node, Sym):
            result = targets[node.symbol]
        else:
            result = _rebuild(node, [walk(c) for c in node.children()])
        memo[id(node)] = (node, result)
        return result

    return walk(e)


def rename_symbols(e: Expr, mapping: Mapping[Symbol, Symbol]) -> Expr:
    return substitute(e, {k: Sym(v) for k, v in mapping.items()})


# -- numeric evaluation -------------------------------------------------------------------


class _BatchEvaluator:
    """One tree walk over arrays of sample values; NaN marks poles and domain failures."""

    def __init__(self, env: Mapping[Symbol, np.ndarray], size: int, pole_guard: float):
        self.env = env
        self.size = size
        self.pole_guard = pole_guard
        self.memo: Dict[int, Tuple[Expr, np.ndarray]] = {}
        self.issues: List[Tuple[str, Expr]] = []

    def _flag(self, kind: str, node: Expr, mask: np.ndarray) -> None:
        if mask.any() and len(self.issues) < 8:
            self.issues.append((kind, node))

    def __call__(self, node: Expr) -> np.ndarray:
        hit = self.memo.get(id(node))
        if hit is not None:
            return hit[1]
        value = self._evaluate(node)
        self.memo[id(node)] = (node, value)
        return value

    def _evaluate(self, node: Expr) -> np.ndarray:
        if isinstance(node, Const):
            return np.full(self.size, float(node.value))
        if isinstance(node, Sym):
            try:
                raw = self.env[node.symbol]
            except KeyError:
                raise UnknownSymbol(node.symbol.label) from None
            return np.broadcast_to(np.asarray(raw, dtype=float), (self.size,))
        if isinstance(node, Add):
            total = np.zeros(self.size)
            for term in node.terms:
                total = total + self(term)
            return total
        if isinstance(node, Mul):
            prod = np.ones(self.size)
            for factor in node.factors:
                prod = prod * self(factor)
            return prod
        if isinstance(node, Neg):
            return -self(node.child)
        if isinstance(node, Div):
            num, den = self(node.num), self(node.den)
            pole = np.abs(den) < self.pole_guard
            self._flag("pole", node, pole)
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(pole, np.nan, num / np.where(pole, 1.0, den))
        if isinstance(node, Pow):
            base = self(node.base)
            exponent = node.exponent
            bad = np.zeros(self.size, dtype=bool)
            if exponent < 0:
                pole = np.abs(base) < self.pole_guard
                self._flag("pole", node, pole)
                bad |= pole
            if exponent.denominator != 1:
                domain = base < 0
                self._flag("domain", node, domain)
                bad |= domain
            safe = np.where(bad, 1.0, base)
            with np.errstate(all="ignore"):
                if exponent.denominator == 1:
                    out = safe ** int(exponent)
                else:
                    out = np.sqrt(safe) ** int(2 * exponent)
            return np.where(bad, np.nan, out)
        if isinstance(node, Apply):
            x = self(node.arg)
            with np.errstate(all="ignore"):
                if node.func == "log":
                    bad = x <= 0
                    self._flag("domain", node, bad)
                    return np.where(bad, np.nan, np.log(np.where(bad, 1.0, x)))
                if node.func == "sqrt":
                    bad = x < 0
                    self._flag("domain", node, bad)
                    return np.where(bad, np.nan, np.sqrt(np.where(bad, 0.0, x)))
                out = {
                    "exp": np.exp,
                    "sin": np.sin,
                    "cos": np.cos,
                    "arctan": np.arctan,
                }[node.func](x)
            overflow = ~np.isfinite(out) & np.isfinite(x)
            self._flag("domain", node, overflow)
            return np.where(overflow, np.nan, out)
        raise TypeError(f"cannot evaluate {type(node).__name__}")


def evaluate_batch(
    e: Expr,
    env: Mapping[Symbol, np.ndarray],
    pole_guard: float = DEFAULT_POLE_GUARD,
) -> np.ndarray:
    """Evaluate e at many points at once; NaN entries mark poles or domain violations."""
    sizes = [np.size(v) for v in env.values()]
    size = max(sizes, default=1)
    return _BatchEvaluator(env, size, pole_guard)(e)


def evaluate_many(
    exprs: Sequence[Expr],
    env: Mapping[Symbol, np.ndarray],
    pole_guard: float = DEFAULT_POLE_GUARD,
) -> np.ndarray:
    """Evaluate several expressions sharing one memo; returns shape (len(exprs), samples)."""
    size = max((np.size(v) for v in env.values()), default=1)
    walker = _BatchEvaluator(env, size, pole_guard)
    if not exprs:
        return np.zeros((0, size))
    return np.vstack([walker(e) for e in exprs])


def evaluate(
    e: Expr,
    point: Mapping[Symbol, float],
    pole_guard: float = DEFAULT_POLE_GUARD,
) -> float:
    """IEEE-754 value of e at a single point."""
    env = {k: np.array([float(v)]) for k, v in point.items()}
    walker = _BatchEvaluator(env, 1, pole_guard)
    value = float(walker(e)[0])
    if np.isnan(value):
        kind, node = walker.issues[0] if walker.issues else ("domain", e)
        if kind == "pole":
            raise PoleError(
                f"pole in {render(node)}",
                assignment=dict(point),
                subexpression=node,
            )
        raise DomainError(f"domain violation in {render(node)}")
    return value


# -- code generation -------------------------------------------------------------------------


_NUMPY_NAMES = {
    "exp": "np.exp",
    "log": "np.log",
    "sin": "np.sin",
    "cos": "np.cos",
    "arctan": "np.arctan",
    "sqrt": "np.sqrt",
}


def _python_source(e: Expr, names: Mapping[Symbol, str]) -> str:
    if isinstance(e, Const):
        v = e.value
        return f"({v.numerator}/{v.denominator})" if v.denominator != 1 else f"({v.numerator})"
    if isinstance(e, Sym):
        return names[e.symbol]
    if isinstance(e, Add):
        return "(" + " + ".join(_python_source(t, names) for t in e.terms) + ")"
    if isinstance(e, Mul):
        return "(" + " * ".join(_python_source(f, names) for f in e.factors) + ")"
    if isinstance(e, Div):
        return f"({_python_source(e.num, names)} / {_python_source(e.den, names)})"
    if isinstance(e, Pow):
        exponent = e.exponent
        exp_src = str(int(exponent)) if exponent.denominator == 1 else f"({float(exponent)!r})"
        return f"({_python_source(e.base, names)} ** {exp_src})"
    if isinstance(e, Neg):
        return f"(-{_python_source(e.child, names)})"
    if isinstance(e, Apply):
        return f"{_NUMPY_NAMES[e.func]}({_python_source(e.arg, names)})"
    raise TypeError(f"cannot compile {type(e).__name__}")


def lambdify(
    exprs: Sequence[Expr],
    symbols: Sequence[Symbol],
) -> Callable[..., List[np.ndarray]]:
    """Compile expressions into one numpy function of the given symbols.

    The returned callable takes one positional argument per symbol (scalars or
    equally shaped arrays) and returns the list of values.
    """
    names = {s: f"_x{i}" for i, s in enumerate(symbols)}
    missing = set().union(*(e.free_symbols for e in exprs)) - set(names) if exprs else set()
    if missing:
        raise UnknownSymbol(", ".join(sorted(s.label for s in missing)))
    body = ", ".join(_python_source(e, names) for e in exprs)
    source = f"def _compiled({', '.join(names.values())}):\n    return [{body}]\n"
    namespace: Dict[str, object] = {"np": np}
    exec(compile(source, "<symred-lambdify>", "exec"), namespace)
    return namespace["_compiled"]  # type: ignore[return-value]


# -- rendering ------------------------------------------------------------------------------------


def _render_const(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def render(e: Expr, names: Optional[Mapping[Symbol, str]] = None) -> str:
    """Canonical compact text in the parser's grammar."""
    names = names or {}

    def label(s: Symbol) -> str:
        if s in names:
            return names[s]
        if s.kind is SymbolKind.JET and dependent(s.index) in names:
            return names[dependent(s.index)] + "'" * s.order
        return s.label

    def wrap(node: Expr, text: str, parent_precedence: int) -> str:
        return f"({text})" if _effective_precedence(node) < parent_precedence else text

    def walk(node: Expr) -> str:
        if isinstance(node, Const):
            return _render_const(node.value)
        if isinstance(node, Sym):
            return label(node.symbol)
        if isinstance(node, Add):
            pieces: List[str] = []
            for i, term in enumerate(node.terms):
                text, negative = _signed(term, walk)
                if i == 0:
                    pieces.append(("-" if negative else "") + text)
                else:
                    pieces.append(("-" if negative else "+") + text)
            return "".join(pieces)
        if isinstance(node, Mul):
            factors = list(node.factors)
            prefix = ""
            if isinstance(factors[0], Const):
                coefficient = factors.pop(0).value  # type: ignore[union-attr]
                if coefficient == -1:
                    prefix = "-"
                else:
                    prefix = _render_const(coefficient) + "*"
            parts = []
            for i, factor in enumerate(factors):
                text = walk(factor)
                needs = isinstance(factor, (Add, Neg)) or (
                    isinstance(factor, Div) and (i > 0 or prefix not in ("", "-"))
                )
                parts.append(f"({text})" if needs else text)
            return prefix + "*".join(parts)
        if isinstance(node, Div):
            num = walk(node.num)
            if isinstance(node.num, (Add, Neg)) or (
                isinstance(node.num, Const) and node.num.value.denominator != 1
            ):
                num = f"({num})"
            den = walk(node.den)
            if not isinstance(node.den, (Sym, Apply, Pow)):
                den = f"({den})"
            return f"{num}/{den}"
        if isinstance(node, Pow):
            base = walk(node.base)
            if not (
                isinstance(node.base, (Sym, Apply))
                or (isinstance(node.base, Const) and node.base.value.denominator == 1
                    and node.base.value > 0)
            ):
                base = f"({base})"
            exponent = node.exponent
            exp_text = _render_const(exponent)
            if exponent < 0 or exponent.denominator != 1:
                exp_text = f"({exp_text})"
            return f"{base}^{exp_text}"
        if isinstance(node, Neg):
            return "-" + wrap(node.child, walk(node.child), Neg.precedence)
        if isinstance(node, Apply):
            return f"{node.func}({walk(node.arg)})"
        raise TypeError(f"cannot render {type(node).__name__}")

    return walk(e)


def _effective_precedence(node: Expr) -> int:
    if isinstance(node, Const) and (node.value < 0 or node.value.denominator != 1):
        return Neg.precedence if node.value.denominator == 1 else Mul.precedence
    return node.precedence


def _signed(term: Expr, walk: Callable[[Expr], str]) -> Tuple[str, bool]:
    """Text of a sum term with its sign pulled out."""
    if isinstance(term, Neg):
        child = term.child
        text = walk(child)
        return (f"({text})" if isinstance(child, Add) else text), True
    if isinstance(term, Const) and term.value < 0:
        return _render_const(-term.value), True
    if isinstance(term, Mul) and isinstance(term.factors[0], Const) and term.factors[0].value < 0:
        return walk(neg(term)), True
    if isinstance(term, Div) and _leading_negative(term.num):
        return walk(Div(neg(term.num), term.den)), True
    return walk(term), False


def _leading_negative(e: Expr) -> bool:
    if isinstance(e, Neg):
        return True
    if isinstance(e, Const):
        return e.value < 0
    return isinstance(e, Mul) and isinstance(e.factors[0], Const) and e.factors[0].value < 0


def symbols_of(exprs: Iterable[Expr]) -> List[Symbol]:
    """Sorted union of free symbols."""
    found: set = set()
    for e in exprs:
        found |= e.free_symbols
    return sorted(found)
