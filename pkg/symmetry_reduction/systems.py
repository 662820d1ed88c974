"""Dynamical systems and solved ODE systems, with restriction to their solution manifold."""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .exceptions import DimensionMismatch, NoSolvedForm
from .expr import (
    TIME,
    ZERO,
    Expr,
    Sym,
    Symbol,
    add,
    dependent,
    diff,
    div,
    is_const,
    jet,
    jet_order,
    lambdify,
    mul,
    neg,
    parameter,
    render,
    sub,
    substitute,
)
from .jet import VectorField, total_derivative
from .sampling import Sampler

logger = logging.getLogger(__name__)


class SolvedSystem:
    """Common restriction machinery: u^a_k for k >= q_a is replaced by D_t^(k-q_a) of S_a."""

    n: int
    names: Tuple[str, ...]
    parameters: Tuple[str, ...]

    def top_orders(self) -> Tuple[int, ...]:
        raise NotImplementedError

    def top_expressions(self) -> Tuple[Expr, ...]:
        raise NotImplementedError

    def _cache(self) -> Dict[Symbol, Expr]:
        cache = self.__dict__.get("_restriction_cache")
        if cache is None:
            cache = {}
            self.__dict__["_restriction_cache"] = cache
        return cache

    def solved_jet(self, a: int, k: int) -> Expr:
        """u^a_k on the solution manifold, k >= q_a, in free coordinates."""
        q = self.top_orders()[a - 1]
        if k < q:
            return Sym(jet(a, k))
        key = jet(a, k)
        cache = self._cache()
        if key not in cache:
            if k == q:
                cache[key] = self.top_expressions()[a - 1]
            else:
                raw = total_derivative(self.solved_jet(a, k - 1), q_max=max(self.top_orders()))
                cache[key] = self._substitute_tops(raw)
        return cache[key]

    def _substitute_tops(self, e: Expr) -> Expr:
        tops = self.top_orders()
        bindings = {
            s: self.solved_jet(s.index, s.order)
            for s in e.free_symbols
            if s.is_state and s.index <= self.n and s.order >= tops[s.index - 1]
        }
        return substitute(e, bindings)

    def restrict(self, e: Expr) -> Expr:
        """Replace every jet at or above the solved order by its value on the manifold."""
        return self._substitute_tops(e)

    def display_names(self) -> Dict[Symbol, str]:
        if not self.names:
            return {}
        return {dependent(i): name for i, name in enumerate(self.names, start=1)}


@dataclass
class DynSystem(SolvedSystem):
    """First-order system u' = f(t, u)."""

    f: Tuple[Expr, ...]
    parameters: Tuple[str, ...] = ()
    names: Tuple[str, ...] = ()
    label: str = ""
    _restriction_cache: Dict[Symbol, Expr] = field(
        default_factory=dict, init=False, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        self.f = tuple(self.f)
        for a, fa in enumerate(self.f, start=1):
            if jet_order(fa) > 0:
                raise DimensionMismatch(f"right-hand side {a} depends on derivatives")
            if any(s.is_state and s.index > self.n for s in fa.free_symbols):
                raise DimensionMismatch(f"right-hand side {a} uses a variable beyond n={self.n}")

    @property
    def n(self) -> int:  # type: ignore[override]
        return len(self.f)

    def top_orders(self) -> Tuple[int, ...]:
        return (1,) * self.n

    def top_expressions(self) -> Tuple[Expr, ...]:
        return self.f

    def has_explicit_time(self) -> bool:
        return any(TIME in fa.free_symbols for fa in self.f)

    def autonomous(self, sampler: Optional[Sampler] = None) -> bool:
        """No explicit t; decided by sampling d f/d t when a sampler is given."""
        if not self.has_explicit_time():
            return True
        if sampler is None:
            return False
        return sampler.all_zero([diff(fa, TIME) for fa in self.f], "autonomous").ok

    def dynamical_field(self) -> VectorField:
        """F = f . grad_u"""
        return VectorField.vertical(self.f, "F")

    def flow_derivative(self, e: Expr) -> Expr:
        """de/dt + f . grad_u e for an order-0 expression."""
        flow = (mul(fa, diff(e, dependent(a))) for a, fa in enumerate(self.f, 1))
        return add(diff(e, TIME), *flow)

    def scaled(self, rho: Expr) -> "DynSystem":
        scaled = tuple(mul(rho, fa) for fa in self.f)
        return DynSystem(scaled, self.parameters, self.names, self.label)

    def compiled(self) -> Callable:
        """numpy callable rhs(t, u1..un, *parameters)"""
        symbols = [TIME] + [dependent(a) for a in range(1, self.n + 1)]
        symbols += [parameter(p) for p in self.parameters]
        return lambdify(list(self.f), symbols)

    def render_equations(self) -> List[str]:
        names = self.display_names()
        out = []
        for a, fa in enumerate(self.f, start=1):
            lhs = render(Sym(jet(a, 1)), names)
            out.append(f"{lhs}={render(fa, names)}")
        return out


@dataclass
class OdeSystem(SolvedSystem):
    """Equations E_a = 0, solved for the top derivative u^a_{q_a} when possible."""

    equations: Tuple[Expr, ...]
    orders: Tuple[int, ...]
    solved: Optional[Tuple[Expr, ...]] = None
    parameters: Tuple[str, ...] = ()
    names: Tuple[str, ...] = ()
    label: str = ""
    _restriction_cache: Dict[Symbol, Expr] = field(
        default_factory=dict, init=False, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        self.equations = tuple(self.equations)
        self.orders = tuple(self.orders)
        if len(self.orders) != len(self.equations):
            raise DimensionMismatch("one order per equation is required")
        for a, e in enumerate(self.equations, start=1):
            if jet_order(e) < 1:
                raise DimensionMismatch(f"equation {a} involves no derivative")
        if self.solved is not None:
            self.solved = tuple(self.solved)
            if len(self.solved) != len(self.equations):
                raise DimensionMismatch("one solved form per equation is required")
            tops = self.orders
            for a, rhs in enumerate(self.solved, start=1):
                for s in rhs.free_symbols:
                    if s.is_state and s.index > len(tops):
                        raise DimensionMismatch(f"solved form {a} refers to {s.label}")
                    if s.is_state and s.order >= tops[s.index - 1]:
                        raise NoSolvedForm(f"solved form {a} still contains {s.label}")

    @property
    def n(self) -> int:  # type: ignore[override]
        return len(self.equations)

    @property
    def q(self) -> int:
        return max(self.orders)

    @classmethod
    def from_solved(
        cls,
        orders: Sequence[int],
        rhs: Sequence[Expr],
        parameters: Sequence[str] = (),
        names: Sequence[str] = (),
        label: str = "",
    ) -> "OdeSystem":
        equations = tuple(sub(Sym(jet(a, q)), r) for a, (q, r) in enumerate(zip(orders, rhs), 1))
        return cls(equations, tuple(orders), tuple(rhs), tuple(parameters), tuple(names), label)

    @classmethod
    def from_equations(
        cls,
        equations: Sequence[Expr],
        parameters: Sequence[str] = (),
        names: Sequence[str] = (),
        label: str = "",
    ) -> "OdeSystem":
        """Take u^a's highest jet in equation a as its top and solve when it enters linearly."""
        orders = []
        solved: List[Expr] = []
        solvable = True
        for a, e in enumerate(equations, start=1):
            own = [s.order for s in e.free_symbols if s.is_state and s.index == a]
            q = max(own, default=0)
            if q == 0:
                raise NoSolvedForm(f"equation {a} does not involve a derivative of u{a}")
            orders.append(q)
            top = jet(a, q)
            coefficient = diff(e, top)
            if top in coefficient.free_symbols or is_const(coefficient, 0):
                solvable = False
                continue
            remainder = substitute(e, {top: ZERO})
            solved.append(neg(div(remainder, coefficient)))
        return cls(
            tuple(equations),
            tuple(orders),
            tuple(solved) if solvable else None,
            tuple(parameters),
            tuple(names),
            label,
        )

    def top_orders(self) -> Tuple[int, ...]:
        return self.orders

    def top_expressions(self) -> Tuple[Expr, ...]:
        if self.solved is None:
            raise NoSolvedForm(f"{self.label or 'system'} has no solved form")
        return self.solved

    def require_solved(self) -> Tuple[Expr, ...]:
        return self.top_expressions()

    def check_solved_form(self, sampler: Sampler):
        """Substituting the solved form into E must give zero."""
        return sampler.all_zero([self.restrict(e) for e in self.equations], "solved-form")

    def render_equations(self) -> List[str]:
        names = self.display_names()
        if self.solved is None:
            return [f"{render(e, names)}=0" for e in self.equations]
        return [
            f"{render(Sym(jet(a, q)), names)}={render(r, names)}"
            for a, (q, r) in enumerate(zip(self.orders, self.solved), start=1)
        ]
