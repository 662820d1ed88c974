"""Conversion between dynamical systems and scalar higher-order ODEs."""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .exceptions import (
    DimensionMismatch,
    NewtonDivergence,
    NoSolvedForm,
    NotExpressible,
    RankDeficientChain,
)
from .expr import (
    ONE,
    TIME,
    Expr,
    Sym,
    Symbol,
    dependent,
    diff,
    div,
    jet,
    lambdify,
    mul,
    neg,
    parameter,
    power,
    render,
    rename_symbols,
    sub,
    substitute,
)
from .reduction import ReductionResult, jacobian_rank
from .sampling import Sampler, ZeroVerdict
from .systems import DynSystem, OdeSystem

logger = logging.getLogger(__name__)

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50

# placeholder for u^p during power isolation
_POWER_SLOT = parameter("__isolated")
_ISOLATION_POWERS = (1, -1, 2, -2)


def autonomize(ds: DynSystem) -> DynSystem:
    """Prepend u1 = t with u1' = 1 and shift the other variables up by one."""
    if not ds.has_explicit_time():
        return ds
    shift = {dependent(a): dependent(a + 1) for a in range(1, ds.n + 1)}
    rhs = [ONE]
    for fa in ds.f:
        shifted = rename_symbols(fa, shift)
        rhs.append(substitute(shifted, {TIME: Sym(dependent(1))}))
    names = ("t0",) + ds.names if ds.names else ()
    return DynSystem(tuple(rhs), ds.parameters, names, f"{ds.label}-autonomous" if ds.label else "")


def _working_system(
    ds: DynSystem, pivot: int, time_index: Optional[int], sampler: Sampler
) -> Tuple[DynSystem, Dict[int, int]]:
    """Reorder so the pivot is u1 and drop the time variable.

    Returns the working system and the index map original -> working.
    """
    if not 1 <= pivot <= ds.n or pivot == time_index:
        raise DimensionMismatch(f"pivot u{pivot} is not a state variable")
    order = [pivot] + [a for a in range(1, ds.n + 1) if a not in (pivot, time_index)]
    index_map = {a: i for i, a in enumerate(order, start=1)}
    bindings: Dict[Symbol, Expr] = {dependent(a): Sym(dependent(i)) for a, i in index_map.items()}
    if time_index is not None:
        if not 1 <= time_index <= ds.n:
            raise DimensionMismatch(f"time variable u{time_index} out of range")
        if not sampler.is_zero(sub(ds.f[time_index - 1], ONE), "time-rate").ok:
            raise DimensionMismatch(f"u{time_index}' must be 1 to act as time")
        bindings[dependent(time_index)] = Sym(TIME)
    rhs = tuple(substitute(ds.f[a - 1], bindings) for a in order)
    return DynSystem(rhs, ds.parameters, label=ds.label), index_map


def _isolate(equation: Expr, unknown: Symbol, sampler: Sampler) -> Optional[Expr]:
    """Solve equation = 0 for ``unknown`` when it enters as c*u^p + r with p in (1, -1, 2, -2)."""
    for p in _ISOLATION_POWERS:
        slot = Sym(_POWER_SLOT)
        if p == 1:
            replaced = equation
        else:
            replaced = substitute(equation, {unknown: power(slot, Fraction(1, p))})
        variable = unknown if p == 1 else _POWER_SLOT
        coefficient = diff(replaced, variable)
        if sampler.is_zero(coefficient, f"isolate:{unknown.label}:{p}").ok:
            continue
        if not sampler.is_zero(diff(coefficient, variable), f"isolate-lin:{unknown.label}:{p}").ok:
            continue
        rest = sub(replaced, mul(coefficient, Sym(variable)))
        rest = substitute(rest, {variable: ONE})
        coefficient = substitute(coefficient, {variable: ONE})
        value = neg(div(rest, coefficient))
        return value if p == 1 else power(value, Fraction(1, p))
    return None


def invert_chain(chain: Sequence[Expr], m: int, sampler: Sampler) -> Optional[Dict[Symbol, Expr]]:
    """Triangular elimination of u2..um from y^(k) = chain[k], k < m."""
    inverse: Dict[Symbol, Expr] = {dependent(1): Sym(dependent(1))}
    pending = [(k, sub(chain[k], Sym(jet(1, k)))) for k in range(1, m)]
    while pending:
        progressed = False
        for entry in list(pending):
            k, equation = entry
            equation = substitute(equation, inverse)
            unknowns = sorted(
                s
                for s in equation.free_symbols
                if s.is_state and s.order == 0 and s not in inverse
            )
            if len(unknowns) != 1:
                continue
            solution = _isolate(equation, unknowns[0], sampler)
            if solution is None:
                continue
            logger.debug("chain level %d solved for %s", k, unknowns[0].label)
            inverse = {s: substitute(e, {unknowns[0]: solution}) for s, e in inverse.items()}
            inverse[unknowns[0]] = solution
            pending.remove(entry)
            progressed = True
        if not progressed:
            return None
    return inverse


class NumericInverse:
    """Newton inversion of the chain map (t, u) -> (y, y', ..., y^(m-1)).

    The initial guess belongs to the caller; the object holds only compiled code.
    """

    def __init__(
        self, chain: Sequence[Expr], m: int, parameters: Optional[Mapping[str, float]] = None
    ):
        parameters = dict(parameters or {})
        self.m = m
        self.parameter_values = [float(v) for v in parameters.values()]
        states = [dependent(a) for a in range(1, m + 1)]
        symbols = [TIME] + states + [parameter(p) for p in parameters]
        self._map = lambdify(list(chain[:m]), symbols)
        self._top = lambdify([chain[m]], symbols)
        jacobian = [diff(chain[k], s) for k in range(m) for s in states]
        self._jacobian = lambdify(jacobian, symbols)

    def _call(self, func: Callable, t: float, u: np.ndarray) -> np.ndarray:
        values = np.broadcast_arrays(*func(t, *u, *self.parameter_values))
        return np.array([float(v) for v in values], dtype=float)

    def solve(self, t: float, jets: Sequence[float], guess: Sequence[float]) -> np.ndarray:
        u = np.array(guess, dtype=float)
        target = np.asarray(jets, dtype=float)
        for _ in range(NEWTON_MAX_ITER):
            residual = self._call(self._map, t, u) - target
            if np.max(np.abs(residual)) <= NEWTON_TOL * max(1.0, np.max(np.abs(target))):
                return u
            matrix = self._call(self._jacobian, t, u).reshape(self.m, self.m)
            try:
                step = np.linalg.solve(matrix, residual)
            except np.linalg.LinAlgError as e:
                raise NewtonDivergence(f"singular chain Jacobian at t={t}") from e
            u = u - step
            if not np.all(np.isfinite(u)):
                break
        raise NewtonDivergence(f"no convergence after {NEWTON_MAX_ITER} iterations at t={t}")

    def top(
        self, t: float, jets: Sequence[float], guess: Sequence[float]
    ) -> Tuple[float, np.ndarray]:
        """y^(m) at the given jet values and the state that produced it."""
        u = self.solve(t, jets, guess)
        return float(self._call(self._top, t, u)[0]), u


@dataclass
class OdeConversion:
    source: DynSystem
    pivot: int
    time_index: Optional[int]
    working: DynSystem
    index_map: Dict[int, int]
    chain: Tuple[Expr, ...]
    inverse: Optional[Dict[Symbol, Expr]] = None
    ode: Optional[OdeSystem] = None
    parameter_values: Dict[str, float] = field(default_factory=dict)

    @property
    def order(self) -> int:
        return self.working.n

    @property
    def symbolic(self) -> bool:
        return self.inverse is not None

    def implicit_residual(self) -> Expr:
        """y^(m) - chain[m], zero along solutions once the u are eliminated."""
        return sub(Sym(jet(1, self.order)), self.chain[self.order])

    def numeric(self, parameters: Optional[Mapping[str, float]] = None) -> NumericInverse:
        return NumericInverse(self.chain, self.order, parameters or self.parameter_values)

    def to_working(self, e: Expr) -> Expr:
        """Rewrite an expression in the source variables into working variables."""
        bindings: Dict[Symbol, Expr] = {
            dependent(a): Sym(dependent(i)) for a, i in self.index_map.items()
        }
        if self.time_index is not None:
            bindings[dependent(self.time_index)] = Sym(TIME)
        return substitute(e, bindings)

    def to_jets(self, e: Expr) -> Expr:
        if self.inverse is None:
            raise NoSolvedForm("chain map has no symbolic inverse")
        return substitute(self.to_working(e), self.inverse)

    def from_jets(self, e: Expr) -> Expr:
        return substitute(e, {jet(1, k): self.chain[k] for k in range(self.order)})

    def initial_jets(self, u0: Sequence[float], t0: float = 0.0) -> np.ndarray:
        """(y, y', ..., y^(m-1)) at t0 matching the DS state u0."""
        if self.time_index is not None:
            t0 = float(u0[self.time_index - 1])
        state = [u0[a - 1] for a, _ in sorted(self.index_map.items(), key=lambda item: item[1])]
        symbols = [TIME] + [dependent(a) for a in range(1, self.order + 1)]
        symbols += [parameter(p) for p in self.parameter_values]
        compiled = lambdify(list(self.chain[: self.order]), symbols)
        values = compiled(t0, *state, *self.parameter_values.values())
        return np.array([float(v) for v in np.broadcast_arrays(*values)], dtype=float)


def ds_to_ode(
    ds: DynSystem,
    sampler: Sampler,
    pivot: int = 1,
    time_index: Optional[int] = None,
    name: str = "y",
) -> OdeConversion:
    """y = u_pivot, y^(k+1) = D_t y^(k); invert the chain and express y^(m) in y's jets."""
    working, index_map = _working_system(ds, pivot, time_index, sampler)
    m = working.n
    chain: List[Expr] = [Sym(dependent(1))]
    for _ in range(m):
        chain.append(working.flow_derivative(chain[-1]))
    states = [dependent(a) for a in range(1, m + 1)]
    rank = jacobian_rank(chain[:m], states, sampler, "chain-rank")
    if rank < m:
        raise RankDeficientChain(f"chain from u{pivot} has rank {rank} < {m}")
    inverse = invert_chain(chain, m, sampler)
    conversion = OdeConversion(ds, pivot, time_index, working, index_map, tuple(chain), inverse)
    if inverse is None:
        logger.info("no triangular inverse for pivot u%d; numeric inversion only", pivot)
        return conversion
    check = sampler.all_zero(
        [sub(substitute(chain[k], inverse), Sym(jet(1, k))) for k in range(m)], "chain-inverse"
    )
    if not check.ok:
        logger.warning("symbolic chain inverse failed verification, using numeric inversion")
        conversion.inverse = None
        return conversion
    top = substitute(chain[m], inverse)
    conversion.ode = OdeSystem.from_solved([m], [top], ds.parameters, (name,), f"{ds.label}-ode")
    logger.info("derived ODE: %s", conversion.ode.render_equations()[0])
    return conversion


def ode_to_ds(ode: OdeSystem) -> DynSystem:
    """Companion system u1 = y, u_{k+1} = y^(k); explicit t is autonomized into a leading u1 = t."""
    if ode.n != 1:
        raise DimensionMismatch("companion form needs a scalar ODE")
    (rhs,) = ode.require_solved()
    q = ode.orders[0]
    bindings = {jet(1, k): Sym(dependent(k + 1)) for k in range(q)}
    f = [Sym(dependent(k + 2)) for k in range(q - 1)] + [substitute(rhs, bindings)]
    name = ode.names[0] if ode.names else "y"
    names = tuple([name] + [f"{name}{k}" for k in range(1, q)])
    label = f"{ode.label}-ds" if ode.label else ""
    return autonomize(DynSystem(tuple(f), ode.parameters, names, label))


def same_solved_form(left: OdeSystem, right: OdeSystem, sampler: Sampler) -> ZeroVerdict:
    if left.orders != right.orders:
        raise DimensionMismatch(f"orders {left.orders} and {right.orders} differ")
    return sampler.all_zero(
        [sub(a, b) for a, b in zip(left.require_solved(), right.require_solved())], "round-trip"
    )


@dataclass
class TransferredRelation:
    """A relation in the DS variables rewritten in (t, y, y', ...)."""

    name: str
    source: Expr
    expr: Optional[Expr]
    verdict: Optional[ZeroVerdict] = None

    def render(self, names: Optional[Mapping[Symbol, str]] = None) -> str:
        return render(self.expr, names) if self.expr is not None else "<numeric>"


def transfer_reduction(
    conv: OdeConversion,
    red: Optional[ReductionResult],
    sampler: Sampler,
    extra: Sequence[Tuple[str, Expr]] = (),
) -> List[TransferredRelation]:
    """Carry invariants, reconstruction and first-integral relations over to the scalar ODE."""
    sources: List[Tuple[str, Expr]] = []
    if red is not None:
        sources += list(zip(red.invariants.w_names, red.invariants.w))
        sources += [(f"c{i}", c) for i, c in enumerate(red.constants, start=1)]
    sources += list(extra)
    out = []
    for name, source in sources:
        if conv.inverse is None:
            out.append(TransferredRelation(name, source, None))
            continue
        expr = conv.to_jets(source)
        residual = sub(conv.from_jets(expr), conv.to_working(source))
        verdict = sampler.is_zero(residual, f"transfer:{name}")
        if not verdict.ok:
            raise NotExpressible(
                f"transferred {name} does not compose back to its source",
                residual=verdict.max_residual,
                witness=verdict.witness,
            )
        out.append(TransferredRelation(name, source, expr, verdict))
    return out
