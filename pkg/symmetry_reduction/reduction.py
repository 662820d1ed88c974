"""Invariants, reduced systems, reconstruction equations and constants of motion."""

import logging
from dataclasses import dataclass, field
from math import comb
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import NoCommonFactor, NotExpressible, NotFound, WrongCount
from .expr import (
    ONE,
    TIME,
    Expr,
    Sym,
    Symbol,
    SymbolKind,
    apply,
    dependent,
    diff,
    div,
    evaluate_many,
    jet,
    jet_order,
    mul,
    render,
    sub,
    substitute,
    symbols_of,
)
from .fitting import (
    canonical_null_vectors,
    combination,
    fit_expression,
    laurent_exponents,
    monomial,
    monomial_exponents,
    rationalize_vector,
)
from .jet import VectorField, sigma_prolong, total_derivative
from .parser import default_names
from .sampling import Sampler, ZeroVerdict, combine
from .symmetry import SymmetrySet, symmetry_rank
from .systems import DynSystem, OdeSystem, SolvedSystem

logger = logging.getLogger(__name__)


@dataclass
class InvariantSet:
    """Order-0 invariants w of the X_a and first-order invariants eta of the Y_a^{[1]}."""

    w: Tuple[Expr, ...]
    eta: Tuple[Expr, ...] = ()
    provenance: str = "user"
    w_names: Tuple[str, ...] = ()
    eta_names: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        self.w = tuple(self.w)
        self.eta = tuple(self.eta)
        if not self.w_names:
            self.w_names = default_names(len(self.w), "w")
        if not self.eta_names:
            self.eta_names = default_names(len(self.eta), "eta") if self.eta else ()


@dataclass
class InvariantReport:
    w: List[ZeroVerdict]
    eta: List[ZeroVerdict]
    independent: bool
    rank: int

    @property
    def ok(self) -> bool:
        return self.independent and all(v.ok for v in self.w + self.eta)

    @property
    def verdict(self) -> ZeroVerdict:
        return combine(self.w + self.eta, "invariants")


@dataclass
class Relation:
    """name = expr, with expr in reduced coordinates when ``expressed``."""

    name: str
    expr: Expr
    expressed: bool = True


@dataclass
class RatioEquation:
    """d w_i / d w_j = psi(w)"""

    numerator: int
    denominator: int
    psi: Expr


@dataclass
class ReductionResult:
    kind: str
    invariants: InvariantSet
    reduced: Optional[Union[DynSystem, OdeSystem]] = None
    reconstruction: List[Relation] = field(default_factory=list)
    algebraic: List[Relation] = field(default_factory=list)
    omega: Optional[Expr] = None
    ratios: List[RatioEquation] = field(default_factory=list)
    constants: List[Expr] = field(default_factory=list)

    @property
    def names(self) -> Dict[Symbol, str]:
        if self.reduced is None:
            return {}
        return self.reduced.display_names()

    def equations(self) -> List[str]:
        return self.reduced.render_equations() if self.reduced is not None else []

    def ratio_strings(self) -> List[Tuple[str, str]]:
        names = self.invariants.w_names
        return [
            (f"d{names[r.numerator - 1]}/d{names[r.denominator - 1]}", render(r.psi, self.names))
            for r in self.ratios
        ]


# -- re-expression in new coordinates ---------------------------------------------------------


def _sample_count(k: int, degree: int) -> int:
    return 3 * comb(k + degree, degree) + 20


def express(
    target: Expr,
    coordinates: Sequence[Expr],
    symbols: Sequence[Symbol],
    sampler: Sampler,
    label: str,
    max_degree: int = 4,
    rational: bool = True,
) -> Expr:
    """Write ``target`` as a function of ``coordinates`` (named by ``symbols``).

    Explicit t and parameters of the target are carried along as extra coordinates.
    """
    coordinates = list(coordinates)
    symbols = list(symbols)
    for s in sorted(target.free_symbols):
        if s.kind in (SymbolKind.TIME, SymbolKind.PARAMETER) and s not in symbols:
            coordinates.append(Sym(s))
            symbols.append(s)
    sample_symbols = symbols_of([target] + coordinates)
    count = _sample_count(len(symbols), max_degree)
    env = sampler.points(sample_symbols, count, f"express:{label}")
    values = evaluate_many([target] + coordinates, env, sampler.tolerances.eps_pole)
    fit = fit_expression(values[0], values[1:], symbols, max_degree, rational)
    if fit is None:
        raise NotExpressible(f"{label}: no fit within degree {max_degree}")
    back = substitute(fit.expr, {s: c for s, c in zip(symbols, coordinates) if Sym(s) != c})
    verdict = sampler.is_zero(sub(target, back), f"express-check:{label}")
    if not verdict.ok:
        raise NotExpressible(
            f"{label}: fitted {render(fit.expr)} does not match",
            residual=verdict.max_residual,
            witness=verdict.witness,
        )
    return fit.expr


# -- invariant verification ------------------------------------------------------------------


def jacobian_rank(
    exprs: Sequence[Expr], symbols: Sequence[Symbol], sampler: Sampler, label: str
) -> int:
    if not exprs:
        return 0
    gradients = [diff(e, s) for e in exprs for s in symbols]
    env = sampler.points(set(symbols) | set(symbols_of(exprs)), 6, label)
    values = evaluate_many(gradients, env, sampler.tolerances.eps_pole)
    ranks = []
    for j in range(values.shape[1]):
        matrix = values[:, j].reshape(len(exprs), len(symbols))
        if not np.all(np.isfinite(matrix)):
            continue
        singular = np.linalg.svd(matrix, compute_uv=False)
        top = singular[0] if singular.size else 0.0
        ranks.append(int((singular > 1e-8 * max(top, 1e-300)).sum()) if top > 0 else 0)
    return min(ranks) if ranks else 0


def verify_invariants(
    sset: SymmetrySet,
    system: SolvedSystem,
    candidate: InvariantSet,
    sampler: Sampler,
) -> InvariantReport:
    """X_a w_j = 0, Y_a^{[1]} eta_b = 0, and (t, w, eta) independent on (t, u, u')."""
    n, r = sset.fields[0].n, sset.rank
    if len(candidate.w) != n - r or len(candidate.eta) not in (0, r):
        raise WrongCount(
            f"expected {n - r} invariants w and {r} eta, "
            f"got {len(candidate.w)} and {len(candidate.eta)}"
        )
    w_verdicts = [
        sampler.all_zero([x.base().apply(w) for x in sset.fields], f"w{j}")
        for j, w in enumerate(candidate.w, start=1)
    ]
    eta_verdicts: List[ZeroVerdict] = []
    if candidate.eta:
        prolonged = sigma_prolong(sset.fields, sset.spec, 1, sampler.tolerances.q_max)
        eta_verdicts = [
            sampler.all_zero([y.apply(eta) for y in prolonged], f"eta{j}")
            for j, eta in enumerate(candidate.eta, start=1)
        ]
    coordinates = [TIME] + [jet(a, k) for k in (0, 1) for a in range(1, n + 1)]
    if not candidate.eta:
        coordinates = [TIME] + [dependent(a) for a in range(1, n + 1)]
    exprs = [Sym(TIME)] + list(candidate.w) + list(candidate.eta)
    rank = jacobian_rank(exprs, coordinates, sampler, "independence")
    report = InvariantReport(w_verdicts, eta_verdicts, rank == len(exprs), rank)
    logger.info("invariants verified: %s (rank %d of %d)", report.ok, rank, len(exprs))
    return report


# -- ansatz search ------------------------------------------------------------------------------


def _augmented_basis(symbols: Sequence[Symbol]) -> List[Expr]:
    states = [s for s in symbols if s.is_state and s.order == 0]
    extra: List[Expr] = [apply("log", Sym(s)) for s in states]
    for i, a in enumerate(states):
        for b in states[i + 1:]:
            extra.append(apply("arctan", div(Sym(b), Sym(a))))
    return extra


def _search_invariants(
    fields: Sequence[VectorField],
    symbols: Sequence[Symbol],
    wanted: int,
    sampler: Sampler,
    degree: int,
    rational: bool,
    augmented: bool = False,
    known: Sequence[Expr] = (),
    rank_symbols: Optional[Sequence[Symbol]] = None,
    require_jet: bool = False,
    label: str = "ansatz",
) -> List[Expr]:
    """Greedy null-space search for common invariants of ``fields``."""
    found: List[Expr] = []
    if wanted <= 0:
        return found
    rank_symbols = list(rank_symbols or symbols)
    base_rank = jacobian_rank(list(known), rank_symbols, sampler, f"{label}:rank0") if known else 0
    denominators = [ONE]
    if rational:
        denominators += [monomial(symbols, e) for e in monomial_exponents(len(symbols), degree, 1)]
    for d in range(1, degree + 1):
        exponents = monomial_exponents(len(symbols), d)
        for m_index, m in enumerate(denominators):
            numerators = [monomial(symbols, e) for e in exponents]
            numerators = [b for b in numerators if b != m and not (m == ONE and b == ONE)]
            if augmented and m == ONE:
                numerators += _augmented_basis(symbols)
            columns = []
            for x in fields:
                x_m = x.apply(m)
                for b in numerators:
                    columns.append(sub(x.apply(b), mul(b, div(x_m, m))) if m != ONE else x.apply(b))
            count = 3 * len(numerators) + 10
            env = sampler.points(symbols, count, f"{label}:{d}:{m_index}")
            values = evaluate_many(columns, env, sampler.tolerances.eps_pole)
            per_field = len(numerators)
            blocks = [values[i * per_field: (i + 1) * per_field].T for i in range(len(fields))]
            matrix = np.vstack(blocks)
            matrix = matrix[np.all(np.isfinite(matrix), axis=1)]
            if matrix.shape[0] < len(numerators):
                continue
            for vector in canonical_null_vectors(matrix):
                coefficients = rationalize_vector(vector)
                if coefficients is None:
                    continue
                candidate = combination(coefficients, numerators)
                if m != ONE:
                    candidate = div(candidate, m)
                if require_jet and jet_order(candidate) == 0:
                    continue
                if not sampler.all_zero([x.apply(candidate) for x in fields], f"{label}:verify").ok:
                    continue
                together = list(known) + found + [candidate]
                rank = jacobian_rank(together, rank_symbols, sampler, f"{label}:rank")
                if rank <= base_rank + len(found):
                    continue
                logger.debug("invariant found: %s", render(candidate))
                found.append(candidate)
                if len(found) == wanted:
                    return found
    return found


def find_invariants_ansatz(
    sset: SymmetrySet,
    sampler: Sampler,
    degree: int = 3,
    rational: bool = True,
    augmented: bool = False,
    with_eta: bool = True,
) -> InvariantSet:
    """Common invariants by sampled null spaces over a monomial (or rational) ansatz."""
    sset.require_vertical(sampler)
    n, r = sset.fields[0].n, sset.rank
    states = [dependent(a) for a in range(1, n + 1)]
    w = _search_invariants(
        sset.fields, states, n - r, sampler, degree, rational, augmented, label="ansatz-w"
    )
    if len(w) < n - r:
        raise NotFound(f"found {len(w)} of {n - r} invariants within degree {degree}")
    eta: List[Expr] = []
    if with_eta and r:
        prolonged = sigma_prolong(sset.fields, sset.spec, 1, sampler.tolerances.q_max)
        jets = [TIME] + states + [jet(a, 1) for a in range(1, n + 1)]
        eta = _search_invariants(
            prolonged,
            jets,
            r,
            sampler,
            degree,
            rational,
            known=[Sym(TIME)] + w,
            require_jet=True,
            label="ansatz-eta",
        )
        if len(eta) < r:
            raise NotFound(
                f"found {len(eta)} of {r} differential invariants within degree {degree}"
            )
    return InvariantSet(tuple(w), tuple(eta), "ansatz")


# -- reductions -------------------------------------------------------------------------------


def _w_symbols(count: int) -> List[Symbol]:
    return [dependent(j) for j in range(1, count + 1)]


def _parameters_of(exprs: Sequence[Expr]) -> Tuple[str, ...]:
    return tuple(
        sorted({s.name for e in exprs for s in e.free_symbols if s.kind is SymbolKind.PARAMETER})
    )


def reduce_ds(
    ds: DynSystem,
    sset: SymmetrySet,
    inv: InvariantSet,
    sampler: Sampler,
    max_degree: int = 4,
) -> ReductionResult:
    """w' = W(w) plus reconstruction equations eta = E(w)."""
    symbols = _w_symbols(len(inv.w))
    reduced_rhs = []
    for j, w in enumerate(inv.w, start=1):
        target = ds.flow_derivative(w)
        reduced_rhs.append(express(target, inv.w, symbols, sampler, f"w{j}'", max_degree))
    parameters = _parameters_of(reduced_rhs)
    reduced = DynSystem(tuple(reduced_rhs), parameters, inv.w_names, f"{ds.label}-reduced")
    reconstruction = []
    for name, eta in zip(inv.eta_names, inv.eta):
        restricted = ds.restrict(eta)
        try:
            reconstruction.append(
                Relation(name, express(restricted, inv.w, symbols, sampler, name, max_degree))
            )
        except NotExpressible:
            logger.info("reconstruction %s kept in original variables", name)
            reconstruction.append(Relation(name, restricted, expressed=False))
    return ReductionResult("full", inv, reduced, reconstruction)


def _assign_variables(
    ode: OdeSystem, inv: InvariantSet, sampler: Sampler
) -> Tuple[List[int], List[int]]:
    """Variable index for each w_j and eta_a, pivoting eta on its u' dependence."""
    free = list(range(1, ode.n + 1))
    eta_slots = []
    for j, eta in enumerate(inv.eta, start=1):
        for a in free:
            if jet(a, 1) not in eta.free_symbols:
                continue
            if not sampler.is_zero(diff(eta, jet(a, 1)), f"pivot:{j}:{a}").ok:
                eta_slots.append(a)
                free.remove(a)
                break
        else:
            raise WrongCount(f"eta{j} involves no free first derivative")
    if len(free) != len(inv.w):
        raise WrongCount(f"{len(free)} variables left for {len(inv.w)} invariants w")
    return free, eta_slots


def reduce_ode(
    ode: OdeSystem,
    sset: SymmetrySet,
    inv: InvariantSet,
    sampler: Sampler,
    max_degree: int = 3,
) -> ReductionResult:
    """Lower the order of r equations by one using (t, w, eta) and their derivatives."""
    sset.require_vertical(sampler)
    ode.require_solved()
    w_slots, eta_slots = _assign_variables(ode, inv, sampler)
    q_max = sampler.tolerances.q_max

    variables: List[Tuple[str, Expr, int]] = []
    for name, eta, a in zip(inv.eta_names, inv.eta, eta_slots):
        variables.append((name, eta, ode.orders[a - 1] - 1))
    for name, w, a in zip(inv.w_names, inv.w, w_slots):
        variables.append((name, w, ode.orders[a - 1]))

    differential = [(name, e, m) for name, e, m in variables if m >= 1]
    algebraic = [(name, e, m) for name, e, m in variables if m == 0]

    coordinates: List[Expr] = [Sym(TIME)]
    symbols: List[Symbol] = [TIME]
    tops: List[Expr] = []
    for index, (name, e, m) in enumerate(differential, start=1):
        level = ode.restrict(e)
        for k in range(m):
            coordinates.append(level)
            symbols.append(jet(index, k))
            level = ode.restrict(total_derivative(level, q_max=q_max))
        tops.append(level)

    rhs = [
        express(top, coordinates, symbols, sampler, f"{name}^({m})", max_degree)
        for top, (name, _, m) in zip(tops, differential)
    ]
    relations = [
        Relation(name, express(ode.restrict(e), coordinates, symbols, sampler, name, max_degree))
        for name, e, _ in algebraic
    ]
    names = tuple(name for name, _, _ in differential)
    reduced = None
    if differential:
        orders = [m for _, _, m in differential]
        label = f"{ode.label}-reduced"
        reduced = OdeSystem.from_solved(orders, rhs, _parameters_of(rhs), names, label)
    return ReductionResult("ode-order-lowering", inv, reduced, algebraic=relations)


def _common_factor(
    derivatives: Sequence[Expr],
    inv: InvariantSet,
    states: Sequence[Symbol],
    sampler: Sampler,
    max_degree: int,
) -> Tuple[Expr, List[Expr]]:
    symbols = _w_symbols(len(inv.w))
    candidates = [monomial(states, e) for e in laurent_exponents(len(states))]
    lead = next((d for d in derivatives if not sampler.is_zero(d, "omega-lead").ok), None)
    if lead is not None:
        candidates.append(lead)
    last_error: Optional[NotExpressible] = None
    for omega in candidates:
        try:
            reduced = [
                express(div(d, omega), inv.w, symbols, sampler, f"W{j}", max_degree)
                for j, d in enumerate(derivatives, start=1)
            ]
        except NotExpressible as e:
            last_error = e
            continue
        return omega, reduced
    raise NoCommonFactor(
        "reduced right-hand sides share no common factor",
        witness=last_error.witness if last_error else None,
    )


def reduce_orbital(
    ds: DynSystem,
    sset: SymmetrySet,
    inv: InvariantSet,
    sampler: Sampler,
    max_degree: int = 4,
) -> ReductionResult:
    """w_j' = omega(u) W_j(w) and the ratio equations dw_i/dw_j = psi(w)."""
    if not inv.w:
        raise WrongCount("orbital reduction needs at least one invariant")
    derivatives = [ds.flow_derivative(w) for w in inv.w]
    states = [dependent(a) for a in range(1, ds.n + 1)]
    omega, reduced_rhs = _common_factor(derivatives, inv, states, sampler, max_degree)
    symbols = _w_symbols(len(inv.w))
    ratios = []
    for i in range(len(inv.w)):
        for j in range(len(inv.w)):
            if i == j or sampler.is_zero(reduced_rhs[j], f"ratio-den:{j}").ok:
                continue
            try:
                quotient = div(derivatives[i], derivatives[j])
                psi = express(quotient, inv.w, symbols, sampler, f"psi{i}{j}", max_degree)
            except NotExpressible:
                continue
            ratios.append(RatioEquation(i + 1, j + 1, psi))
    parameters = _parameters_of(reduced_rhs)
    reduced = DynSystem(tuple(reduced_rhs), parameters, inv.w_names, f"{ds.label}-orbital")
    logger.info("orbital factor omega = %s", render(omega))
    return ReductionResult("orbital", inv, reduced, omega=omega, ratios=ratios)


def constants_of_motion(
    ds: DynSystem,
    sset: SymmetrySet,
    sampler: Sampler,
    degree: int = 3,
    rational: bool = True,
) -> List[Expr]:
    """Time-independent common invariants of the extended set {F, X_a}."""
    extended = [ds.dynamical_field()] + list(sset.fields)
    rank = symmetry_rank(extended, sampler, "extended-rank")
    wanted = ds.n - rank
    if wanted <= 0:
        return []
    states = [dependent(a) for a in range(1, ds.n + 1)]
    found = _search_invariants(
        extended, states, wanted, sampler, degree, rational, label="constants"
    )
    if len(found) < wanted:
        raise NotFound(
            f"found {len(found)} of {wanted} constants of motion within degree {degree}"
        )
    return found


def reduction_shape(
    ds: DynSystem,
    inv: InvariantSet,
    complement: Expr,
    sampler: Sampler,
    max_degree: int = 4,
) -> str:
    """full | partial | up-to-factor | up-to-factor-partial | none"""
    derivatives = [ds.flow_derivative(w) for w in inv.w]
    symbols = _w_symbols(len(inv.w))
    drift = ds.flow_derivative(complement)
    try:
        for j, d in enumerate(derivatives):
            express(d, inv.w, symbols, sampler, f"shape-w{j}", max_degree)
    except NotExpressible:
        states = [dependent(a) for a in range(1, ds.n + 1)]
        try:
            omega, _ = _common_factor(derivatives, inv, states, sampler, max_degree)
        except NoCommonFactor:
            return "none"
        try:
            express(div(drift, omega), inv.w, symbols, sampler, "shape-complement", max_degree)
        except NotExpressible:
            return "up-to-factor-partial"
        return "up-to-factor"
    try:
        express(drift, inv.w, symbols, sampler, "shape-complement", max_degree)
    except NotExpressible:
        return "partial"
    return "full"

