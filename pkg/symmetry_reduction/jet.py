"""Total derivative, vector fields on jet space and their (sigma-)prolongations."""

import logging
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import DimensionMismatch, JetOrderExceeded, NotInvariant
from .expr import (
    TIME,
    ZERO,
    Const,
    Expr,
    Sym,
    add,
    diff,
    div,
    is_const,
    jet,
    mul,
    render,
    sub,
)
from .sampling import Sampler, ZeroVerdict, combine

if TYPE_CHECKING:  # pragma: no cover
    from .systems import SolvedSystem

logger = logging.getLogger(__name__)

Matrix = Tuple[Tuple[Expr, ...], ...]


def total_derivative(
    e: Expr,
    system: Optional["SolvedSystem"] = None,
    q_max: int = 6,
) -> Expr:
    """D_t e = de/dt + sum over jets of u^a_{k+1} de/du^a_k, optionally restricted."""
    terms = [diff(e, TIME)]
    for s in sorted(e.free_symbols):
        if not s.is_state:
            continue
        if s.order + 1 > q_max:
            raise JetOrderExceeded(s.order + 1, q_max)
        partial = diff(e, s)
        if not is_const(partial, 0):
            terms.append(mul(Sym(s.raised()), partial))
    result = add(*terms)
    if system is not None:
        return system.restrict(result)
    return result


@dataclass(frozen=True)
class VectorField:
    """Generator tau d/dt + phi^a d/du^a with optional prolongation coefficients.

    ``prolongation[k - 1][a]`` is the coefficient of d/du^a_k.
    """

    tau: Expr
    phi: Tuple[Expr, ...]
    prolongation: Tuple[Tuple[Expr, ...], ...] = ()
    name: str = ""

    @property
    def n(self) -> int:
        return len(self.phi)

    @property
    def order(self) -> int:
        return len(self.prolongation)

    @classmethod
    def vertical(cls, phi: Sequence[Expr], name: str = "") -> "VectorField":
        return cls(ZERO, tuple(phi), (), name)

    def coefficient(self, a: int, k: int) -> Expr:
        """Coefficient of d/du^a_k (1-based a)."""
        if k == 0:
            return self.phi[a - 1]
        if k > self.order:
            raise JetOrderExceeded(k, self.order)
        return self.prolongation[k - 1][a - 1]

    def base(self) -> "VectorField":
        return replace(self, prolongation=())

    def truncated(self, k: int) -> "VectorField":
        return replace(self, prolongation=self.prolongation[:k])

    def apply(self, e: Expr) -> Expr:
        """X(e) for e of jet order at most the prolongation order."""
        terms = []
        if not is_const(self.tau, 0):
            d = diff(e, TIME)
            if not is_const(d, 0):
                terms.append(mul(self.tau, d))
        for s in sorted(e.free_symbols):
            if not s.is_state:
                continue
            if s.index > self.n:
                raise DimensionMismatch(f"{s.label} outside a field of dimension {self.n}")
            coefficient = self.coefficient(s.index, s.order)
            if is_const(coefficient, 0):
                continue
            d = diff(e, s)
            if not is_const(d, 0):
                terms.append(mul(coefficient, d))
        return add(*terms)

    def is_vertical(self, sampler: Sampler) -> bool:
        return is_const(self.tau, 0) or sampler.is_zero(self.tau, f"vertical:{self.name}").ok

    def components(self) -> Tuple[Expr, ...]:
        """(tau, phi^1 .. phi^n)"""
        return (self.tau,) + self.phi

    def restricted(self, system: "SolvedSystem") -> "VectorField":
        return VectorField(
            system.restrict(self.tau),
            tuple(system.restrict(p) for p in self.phi),
            tuple(tuple(system.restrict(c) for c in row) for row in self.prolongation),
            self.name,
        )

    def render(self) -> str:
        parts = []
        if not is_const(self.tau, 0):
            parts.append(f"({render(self.tau)})*d/dt")
        for a, p in enumerate(self.phi, start=1):
            if not is_const(p, 0):
                parts.append(f"({render(p)})*d/du{a}")
        return "+".join(parts) or "0"


@dataclass(frozen=True)
class SigmaSpec:
    """Deformation matrix sigma, optional orbital column theta and structure constants nu.

    ``nu[alpha][beta][gamma]`` is the coefficient of X_gamma in [X_alpha, X_beta].
    """

    sigma: Matrix
    theta: Optional[Tuple[Expr, ...]] = None
    nu: Optional[Tuple[Matrix, ...]] = None

    def __post_init__(self) -> None:
        s = len(self.sigma)
        if any(len(row) != s for row in self.sigma):
            raise DimensionMismatch("sigma must be square")
        if self.theta is not None and len(self.theta) != s:
            raise DimensionMismatch("theta needs one entry per field")
        if self.nu is not None and (
            len(self.nu) != s or any(len(m) != s or any(len(r) != s for r in m) for m in self.nu)
        ):
            raise DimensionMismatch("nu must be s x s x s")

    @property
    def s(self) -> int:
        return len(self.sigma)

    @property
    def orbital(self) -> bool:
        return self.theta is not None

    @classmethod
    def zero(cls, s: int) -> "SigmaSpec":
        return cls(tuple(tuple(ZERO for _ in range(s)) for _ in range(s)))

    @classmethod
    def scalar(cls, lam: Expr) -> "SigmaSpec":
        """The s = 1 case (lambda-prolongation)."""
        return cls(((lam,),))

    def theta_or_zero(self) -> Tuple[Expr, ...]:
        return self.theta if self.theta is not None else tuple(ZERO for _ in range(self.s))

    def restricted(self, system: "SolvedSystem") -> "SigmaSpec":
        """sigma(t, u, u') with u' replaced by the system's right-hand side."""

        def r(e: Expr) -> Expr:
            return system.restrict(e)

        return SigmaSpec(
            tuple(tuple(r(e) for e in row) for row in self.sigma),
            tuple(r(e) for e in self.theta) if self.theta is not None else None,
            self.nu,
        )

    def check_antisymmetry(self, sampler: Sampler) -> ZeroVerdict:
        if self.nu is None:
            return combine([])
        residuals = [
            add(self.nu[a][b][c], self.nu[b][a][c])
            for a in range(self.s)
            for b in range(self.s)
            for c in range(self.s)
        ]
        return sampler.all_zero(residuals, "nu-antisymmetry")


def sigma_prolong(
    fields: Sequence[VectorField],
    spec: SigmaSpec,
    k: int,
    q_max: int = 6,
) -> List[VectorField]:
    """Prolong every field to order k with the sigma-deformed recursion.

    psi_{j+1,alpha} = D_t psi_{j,alpha} - u_{j+1} D_t tau_alpha
                      + sigma_{alpha beta} (psi_{j,beta} - u_{j+1} tau_beta)
    """
    if len(fields) != spec.s:
        raise DimensionMismatch(f"{len(fields)} fields but sigma is {spec.s}x{spec.s}")
    if not fields:
        return []
    n = fields[0].n
    if any(f.n != n for f in fields):
        raise DimensionMismatch("fields must share the dimension n")
    if k > q_max:
        raise JetOrderExceeded(k, q_max)

    d_tau = [total_derivative(f.tau, q_max=q_max) for f in fields]
    current = [tuple(f.phi) for f in fields]
    levels: List[List[Tuple[Expr, ...]]] = [[] for _ in fields]
    for j in range(k):
        following = []
        for alpha, f in enumerate(fields):
            row = []
            for a in range(n):
                u_next = Sym(jet(a + 1, j + 1))
                terms = [
                    total_derivative(current[alpha][a], q_max=q_max),
                    -mul(u_next, d_tau[alpha]),
                ]
                for beta, g in enumerate(fields):
                    s_ab = spec.sigma[alpha][beta]
                    if is_const(s_ab, 0):
                        continue
                    terms.append(mul(s_ab, sub(current[beta][a], mul(u_next, g.tau))))
                row.append(add(*terms))
            following.append(tuple(row))
        for alpha in range(len(fields)):
            levels[alpha].append(following[alpha])
        current = following
    return [
        VectorField(f.tau, f.phi, tuple(levels[alpha]), f.name)
        for alpha, f in enumerate(fields)
    ]


def standard_prolong(field_: VectorField, k: int, q_max: int = 6) -> VectorField:
    return sigma_prolong([field_], SigmaSpec.zero(1), k, q_max)[0]


def random_test_polynomials(
    n: int,
    k: int,
    count: int,
    rng: np.random.Generator,
    degree: int = 3,
    terms: int = 4,
) -> List[Expr]:
    """Random polynomials in t and u^a_j (j <= k) with small integer coefficients."""
    symbols = [TIME] + [jet(a, j) for a in range(1, n + 1) for j in range(k + 1)]
    polys = []
    for _ in range(count):
        monomials = []
        for _ in range(terms):
            deg = int(rng.integers(1, degree + 1))
            picks = rng.integers(0, len(symbols), size=deg)
            coefficient = int(rng.integers(1, 6)) * (1 if rng.random() < 0.5 else -1)
            monomials.append(mul(Const(coefficient), *(Sym(symbols[i]) for i in picks)))
        polys.append(add(*monomials))
    return polys


def check_commutation_identity(
    fields: Sequence[VectorField],
    spec: SigmaSpec,
    k: int,
    sampler: Sampler,
    count: int = 30,
    q_max: int = 6,
) -> ZeroVerdict:
    """Check [D_t, Y_a^{[k+1]}] = -sigma_ab Y_b^{[k]} + (D_t tau_a + sigma_ab tau_b) D_t.

    Both sides are applied to test polynomials.
    """
    if k + 1 > q_max:
        raise JetOrderExceeded(k + 1, q_max)
    prolonged = sigma_prolong(fields, spec, k + 1, q_max)
    lower = [y.truncated(k) for y in prolonged]
    n = fields[0].n
    tests = random_test_polynomials(n, k, count, sampler.rng(f"battery:{k}"))
    residuals = []
    for g in tests:
        dg = total_derivative(g, q_max=q_max)
        for alpha, y in enumerate(prolonged):
            lhs = sub(total_derivative(y.apply(g), q_max=q_max), y.apply(dg))
            factor = add(
                total_derivative(fields[alpha].tau, q_max=q_max),
                *(mul(spec.sigma[alpha][beta], f.tau) for beta, f in enumerate(fields)),
            )
            row = spec.sigma[alpha]
            mixed = (-mul(row[beta], lower[beta].apply(g)) for beta in range(len(fields)))
            rhs = add(*mixed, mul(factor, dg))
            residuals.append(sub(lhs, rhs))
    verdict = sampler.all_zero(residuals, f"commutation:{k}")
    logger.debug("commutation identity at order %d: %s", k, verdict.status.value)
    return verdict


def check_invariance_by_differentiation(
    fields: Sequence[VectorField],
    spec: SigmaSpec,
    zeta1: Expr,
    zeta2: Expr,
    k: int,
    sampler: Sampler,
    q_max: int = 6,
) -> ZeroVerdict:
    """Y^{[k+1]}(D_t zeta1 / D_t zeta2) = 0 for common invariants zeta1, zeta2 of Y^{[k]}."""
    prolonged = sigma_prolong(fields, spec, k + 1, q_max)
    for which, zeta in (("zeta1", zeta1), ("zeta2", zeta2)):
        for alpha, y in enumerate(prolonged):
            verdict = sampler.is_zero(y.truncated(k).apply(zeta), f"precondition:{which}:{alpha}")
            if not verdict.ok:
                raise NotInvariant(which, alpha, verdict.witness)
    denominator = total_derivative(zeta2, q_max=q_max)
    if sampler.is_zero(denominator, "ratio-denominator").ok:
        raise NotInvariant("D_t zeta2 vanishes identically", 0)
    ratio = div(total_derivative(zeta1, q_max=q_max), denominator)
    return sampler.all_zero([y.apply(ratio) for y in prolonged], f"differentiation:{k}")


def prolongation_table(fields: Sequence[VectorField]) -> List[List[str]]:
    """Rendered coefficients, one row per (field, order)."""
    rows = []
    for alpha, y in enumerate(fields, start=1):
        for k in range(y.order + 1):
            coefficients = y.phi if k == 0 else y.prolongation[k - 1]
            rows.append([str(alpha), str(k)] + [render(c) for c in coefficients])
    return rows

