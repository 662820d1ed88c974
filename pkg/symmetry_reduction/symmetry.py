"""Lie brackets, involution, determining equations and the constructive deformations."""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import (
    ConstantRankViolation,
    DimensionMismatch,
    NotStandardSymmetry,
    SymmetryReductionError,
    VerticalFieldRequired,
    ZeroScaling,
)
from .expr import (
    ZERO,
    Const,
    Expr,
    Symbol,
    add,
    dependent,
    div,
    evaluate_many,
    mul,
    render,
    sub,
    symbols_of,
)
from .fitting import constant_value, fit_expression
from .jet import Matrix, SigmaSpec, VectorField, sigma_prolong
from .sampling import Sampler, Verdict, ZeroVerdict, combine
from .systems import DynSystem, OdeSystem

logger = logging.getLogger(__name__)


def lie_bracket(x: VectorField, y: VectorField) -> VectorField:
    """[X, Y]^c = X(Y^c) - Y(X^c), the t slot included."""
    if x.n != y.n:
        raise DimensionMismatch(f"bracket of fields of dimension {x.n} and {y.n}")
    xb, yb = x.base(), y.base()
    tau = sub(xb.apply(y.tau), yb.apply(x.tau))
    phi = tuple(sub(xb.apply(py), yb.apply(px)) for px, py in zip(x.phi, y.phi))
    return VectorField(tau, phi)


def _bracket_residuals(
    fields: Sequence[VectorField],
    nu: Sequence[Matrix],
) -> List[Expr]:
    residuals = []
    s = len(fields)
    for a in range(s):
        for b in range(a + 1, s):
            bracket = lie_bracket(fields[a], fields[b])
            for c, component in enumerate(bracket.components()):
                combination = add(*(mul(nu[a][b][g], fields[g].components()[c]) for g in range(s)))
                residuals.append(sub(component, combination))
    return residuals


def _component_samples(
    fields: Sequence[VectorField],
    sampler: Sampler,
    label: str,
    count: int,
    with_tau: bool = True,
) -> Tuple[np.ndarray, Dict[Symbol, np.ndarray]]:
    """Values of the fields at sample points, shape (count, s, n [+1])."""
    exprs = [c for f in fields for c in (f.components() if with_tau else f.phi)]
    env = sampler.points(symbols_of(exprs), count, label)
    values = evaluate_many(exprs, env, sampler.tolerances.eps_pole)
    width = (fields[0].n + 1) if with_tau else fields[0].n
    return values.T.reshape(values.shape[1], len(fields), width), env


def symmetry_rank(
    fields: Sequence[VectorField],
    sampler: Sampler,
    label: str = "rank",
) -> int:
    """Numeric rank of the s x n phi-matrix, required constant across samples."""
    if not fields:
        return 0
    count = sampler.tolerances.rank_samples
    values, _ = _component_samples(fields, sampler, label, count, with_tau=False)
    ranks = set()
    for matrix in values:
        if not np.all(np.isfinite(matrix)):
            continue
        singular = np.linalg.svd(matrix, compute_uv=False)
        top = singular[0] if singular.size else 0.0
        if top == 0:
            ranks.add(0)
            continue
        ranks.add(int((singular / top > sampler.tolerances.rank_threshold).sum()))
    if len(ranks) != 1:
        raise ConstantRankViolation(f"rank varies across samples: {sorted(ranks)}")
    return ranks.pop()


@dataclass
class InvolutionResult:
    verdict: ZeroVerdict
    nu: Optional[Tuple[Matrix, ...]]

    @property
    def ok(self) -> bool:
        return self.verdict.ok


def _zero_nu(s: int) -> Tuple[Matrix, ...]:
    return tuple(tuple(tuple(ZERO for _ in range(s)) for _ in range(s)) for _ in range(s))


def fit_structure_constants(
    fields: Sequence[VectorField],
    sampler: Sampler,
    max_degree: int = 2,
) -> Optional[Tuple[Matrix, ...]]:
    """Pointwise least squares for nu, then constant or low-degree rational fits."""
    s = len(fields)
    brackets = {
        (a, b): lie_bracket(fields[a], fields[b]) for a in range(s) for b in range(a + 1, s)
    }
    exprs = [c for f in fields for c in f.components()]
    exprs += [c for (a, b) in sorted(brackets) for c in brackets[(a, b)].components()]
    count = max(3 * 10 * (max_degree + 1), sampler.tolerances.rank_samples)
    env = sampler.points(symbols_of(exprs) or [dependent(1)], count, "nu-fit")
    values = evaluate_many(exprs, env, sampler.tolerances.eps_pole)
    width = fields[0].n + 1
    m = values.shape[1]
    field_values = values[: s * width].reshape(s, width, m)
    bracket_values = values[s * width:].reshape(len(brackets), width, m)
    nu: List[List[List[Expr]]] = [[[ZERO] * s for _ in range(s)] for _ in range(s)]
    symbols = sorted(env)
    coords = np.vstack([env[sym] for sym in symbols]) if symbols else np.zeros((0, m))
    for index, (a, b) in enumerate(sorted(brackets)):
        pointwise = np.full((s, m), np.nan)
        for j in range(m):
            basis = field_values[:, :, j].T
            target = bracket_values[index, :, j]
            if not (np.all(np.isfinite(basis)) and np.all(np.isfinite(target))):
                continue
            solution, *_ = np.linalg.lstsq(basis, target, rcond=None)
            if np.abs(basis @ solution - target).max() > 1e-7 * max(1.0, np.abs(target).max()):
                return None
            pointwise[:, j] = solution
        for g in range(s):
            fitted = constant_value(pointwise[g])
            if fitted is None:
                fit = fit_expression(pointwise[g], coords, symbols, max_degree)
                if fit is None:
                    return None
                fitted = fit.expr
            nu[a][b][g] = fitted
            nu[b][a][g] = mul(Const(-1), fitted)
    return tuple(tuple(tuple(row) for row in plane) for plane in nu)


def check_involution(
    fields: Sequence[VectorField],
    sampler: Sampler,
    nu: Optional[Tuple[Matrix, ...]] = None,
) -> InvolutionResult:
    """Verify [X_a, X_b] = nu_abc X_c, fitting nu when it is not supplied."""
    if not fields:
        raise DimensionMismatch("at least one field is required")
    symmetry_rank(fields, sampler, "involution-rank")
    s = len(fields)
    if nu is None:
        if s == 1:
            nu = _zero_nu(1)
        else:
            nu = fit_structure_constants(fields, sampler)
            if nu is None:
                logger.info("no consistent structure constants found")
                return InvolutionResult(ZeroVerdict(Verdict.NONZERO, label="involution"), None)
    verdict = sampler.all_zero(_bracket_residuals(fields, nu), "involution")
    return InvolutionResult(verdict, nu)


@dataclass
class SymmetrySet:
    """Fields in involution with constant rank and their sigma data."""

    fields: Tuple[VectorField, ...]
    spec: SigmaSpec
    rank: int
    involution_verified: bool = False

    @property
    def s(self) -> int:
        return len(self.fields)

    @property
    def nu(self) -> Optional[Tuple[Matrix, ...]]:
        return self.spec.nu

    @classmethod
    def build(
        cls, fields: Sequence[VectorField], spec: SigmaSpec, sampler: Sampler
    ) -> "SymmetrySet":
        fields = tuple(fields)
        if len(fields) != spec.s:
            raise DimensionMismatch(f"{len(fields)} fields for a {spec.s}x{spec.s} sigma")
        rank = symmetry_rank(fields, sampler)
        if rank > min(len(fields), fields[0].n):
            raise ConstantRankViolation(f"rank {rank} exceeds min(s, n)")
        involution = check_involution(fields, sampler, spec.nu)
        if involution.nu is not None:
            spec = replace(spec, nu=involution.nu)
        return cls(fields, spec, rank, involution.ok)

    def require_vertical(self, sampler: Sampler) -> None:
        for alpha, f in enumerate(self.fields, start=1):
            if not f.is_vertical(sampler):
                raise VerticalFieldRequired(f"field {alpha} has a nonzero t component")


@dataclass
class ResidualEntry:
    label: str
    residual: Expr
    verdict: ZeroVerdict


@dataclass
class ResidualReport:
    """Per-component verdicts of one family of identities."""

    name: str
    entries: List[ResidualEntry] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(e.verdict.ok for e in self.entries)

    @property
    def verdict(self) -> ZeroVerdict:
        return combine((e.verdict for e in self.entries), self.name)

    @property
    def max_residual(self) -> float:
        return max((e.verdict.max_residual for e in self.entries), default=0.0)

    def failures(self) -> List[ResidualEntry]:
        return [e for e in self.entries if not e.verdict.ok]

    def add(self, label: str, residual: Expr, sampler: Sampler) -> None:
        verdict = sampler.is_zero(residual, f"{self.name}:{label}")
        self.entries.append(ResidualEntry(label, residual, verdict))


def determining_residuals(
    ds: DynSystem, fields: Sequence[VectorField], spec: SigmaSpec
) -> List[List[Expr]]:
    """R^a_alpha = [phi_alpha, f]^a - theta_alpha f^a - sigma_ab phi^a_b."""
    restricted = spec.restricted(ds)
    theta = restricted.theta_or_zero()
    out = []
    for alpha, x in enumerate(fields):
        row = []
        for a in range(ds.n):
            bracket = sub(x.base().apply(ds.f[a]), ds.flow_derivative(x.phi[a]))
            terms = [bracket, -mul(theta[alpha], ds.f[a])]
            terms += [-mul(restricted.sigma[alpha][b], g.phi[a]) for b, g in enumerate(fields)]
            row.append(add(*terms))
        out.append(row)
    return out


def check_ds_sigma_symmetry(ds: DynSystem, sset: SymmetrySet, sampler: Sampler) -> ResidualReport:
    """Determining equations [phi_a, f] = theta_a f + sigma_ab phi_b for a dynamical system."""
    sset.require_vertical(sampler)
    report = ResidualReport("ds-sigma")
    for alpha, row in enumerate(determining_residuals(ds, sset.fields, sset.spec), start=1):
        for a, residual in enumerate(row, start=1):
            report.add(f"X{alpha}.u{a}", residual, sampler)
    logger.info("determining equations: %s", "ok" if report.ok else "failed")
    return report


def check_ode_sigma_symmetry(ode: OdeSystem, sset: SymmetrySet, sampler: Sampler) -> ResidualReport:
    """Y^{[q]} E_a restricted to E = 0."""
    ode.require_solved()
    prolonged = sigma_prolong(sset.fields, sset.spec, ode.q, sampler.tolerances.q_max)
    report = ResidualReport("ode-sigma")
    for alpha, y in enumerate(prolonged, start=1):
        for a, equation in enumerate(ode.equations, start=1):
            report.add(f"Y{alpha}.E{a}", ode.restrict(y.apply(equation)), sampler)
    return report


@dataclass
class Construction:
    ds: DynSystem
    spec: SigmaSpec
    report: ResidualReport


def construct_sigma_symmetric(
    ds: DynSystem,
    sset: SymmetrySet,
    mu: Sequence[Expr],
    sampler: Sampler,
) -> Construction:
    """f* = f + mu_a phi_a with sigma_ab = X_a(mu_b) + mu_c nu_acb."""
    if len(mu) != sset.s:
        raise DimensionMismatch(f"{len(mu)} functions mu for {sset.s} fields")
    standard = SymmetrySet(sset.fields, SigmaSpec.zero(sset.s), sset.rank, sset.involution_verified)
    base_report = check_ds_sigma_symmetry(ds, standard, sampler)
    if not base_report.ok:
        failed = len(base_report.failures())
        raise NotStandardSymmetry(f"base system fails {failed} determining equations")
    if not sset.involution_verified or sset.nu is None:
        raise NotStandardSymmetry("fields are not verified to be in involution")
    nu = sset.nu
    s = sset.s
    f_star = tuple(
        add(ds.f[a], *(mul(mu[b], sset.fields[b].phi[a]) for b in range(s))) for a in range(ds.n)
    )
    sigma = tuple(
        tuple(
            add(
                sset.fields[a].base().apply(mu[b]),
                *(mul(mu[c], nu[a][c][b]) for c in range(s)),
            )
            for b in range(s)
        )
        for a in range(s)
    )
    deformed = DynSystem(f_star, ds.parameters, ds.names, ds.label)
    spec = SigmaSpec(sigma, None, nu)
    report = check_ds_sigma_symmetry(deformed, replace(sset, spec=spec), sampler)
    if not report.ok:
        raise SymmetryReductionError("deformed system fails its determining equations")
    return Construction(deformed, spec, report)


def scale_to_orbital(ds: DynSystem, rho: Expr, sampler: Sampler) -> DynSystem:
    """u' = rho f, orbitally equivalent to u' = f."""
    if sampler.is_zero(rho, "rho").ok:
        raise ZeroScaling(f"rho = {render(rho)} vanishes identically")
    return ds.scaled(rho)


def orbital_spec(fields: Sequence[VectorField], spec: SigmaSpec, rho: Expr) -> SigmaSpec:
    """theta' = X(rho)/rho + theta, sigma' = rho sigma for the system scaled by rho."""
    theta = spec.theta_or_zero()
    new_theta = tuple(
        add(div(x.base().apply(rho), rho), theta[alpha]) for alpha, x in enumerate(fields)
    )
    sigma = tuple(tuple(mul(rho, e) for e in row) for row in spec.sigma)
    return SigmaSpec(sigma, new_theta, spec.nu)


def check_prolonged_involution(ds: DynSystem, sset: SymmetrySet, sampler: Sampler) -> ZeroVerdict:
    """First prolongations bracket like the X_a once restricted to u' = f.

    The brackets are taken on the first jet space, so the u' coefficients of each
    prolonged field act on the others before the restriction.
    """
    if sset.nu is None:
        return ZeroVerdict(Verdict.INCONCLUSIVE, label="prolonged-involution")
    prolonged = sigma_prolong(sset.fields, sset.spec, 1, sampler.tolerances.q_max)
    nu = sset.nu
    s = sset.s
    residuals = []
    for a in range(s):
        for b in range(a + 1, s):
            ya, yb = prolonged[a], prolonged[b]
            pairs = list(zip(ya.components(), yb.components()))
            pairs += list(zip(ya.prolongation[0], yb.prolongation[0]))
            for c, (ca, cb) in enumerate(pairs):
                bracket = sub(ya.apply(cb), yb.apply(ca))
                combination = add(
                    *(
                        mul(
                            nu[a][b][g],
                            prolonged[g].components()[c]
                            if c <= ds.n
                            else prolonged[g].prolongation[0][c - ds.n - 1],
                        )
                        for g in range(s)
                    )
                )
                residuals.append(ds.restrict(sub(bracket, combination)))
    return sampler.all_zero(residuals, "prolonged-involution")


@dataclass
class Classification:
    """Which deformation a field set needs for a given system."""

    label: str
    standard_residual: float
    sigma_residual: float
    orbital_residual: float
    full_residual: float


def classify_symmetry(
    ds: DynSystem, fields: Sequence[VectorField], sampler: Sampler
) -> Classification:
    """Fit theta and sigma pointwise and pick the simplest consistent label.

    Labels: standard, lambda (s = 1) or sigma, orbital, orbital-sigma, none.
    """
    brackets = [
        [sub(x.base().apply(ds.f[a]), ds.flow_derivative(x.phi[a])) for a in range(ds.n)]
        for x in fields
    ]
    exprs = [e for row in brackets for e in row] + list(ds.f) + [p for x in fields for p in x.phi]
    env = sampler.points(symbols_of(exprs), sampler.tolerances.rank_samples * 2, "classify")
    values = evaluate_many(exprs, env, sampler.tolerances.eps_pole)
    s, n = len(fields), ds.n
    m = values.shape[1]
    b_vals = values[: s * n].reshape(s, n, m)
    f_vals = values[s * n: s * n + n]
    p_vals = values[s * n + n:].reshape(s, n, m)

    def worst(bases: str) -> float:
        out = 0.0
        for j in range(m):
            columns = []
            if "f" in bases:
                columns.append(f_vals[:, j])
            if "p" in bases:
                columns.extend(p_vals[g, :, j] for g in range(s))
            for alpha in range(s):
                target = b_vals[alpha, :, j]
                if not np.all(np.isfinite(target)):
                    continue
                scale = max(1.0, float(np.abs(target).max()))
                if columns:
                    basis = np.column_stack(columns)
                    solution, *_ = np.linalg.lstsq(basis, target, rcond=None)
                    target = target - basis @ solution
                out = max(out, float(np.abs(target).max()) / scale)
        return out

    residuals = {key: worst(key) for key in ("", "p", "f", "fp")}
    tol = sampler.tolerances.eps_zero
    if residuals[""] <= tol:
        label = "standard"
    elif residuals["p"] <= tol:
        label = "lambda" if s == 1 else "sigma"
    elif residuals["f"] <= tol:
        label = "orbital"
    elif residuals["fp"] <= tol:
        label = "orbital-sigma"
    else:
        label = "none"
    logger.debug("classification %s with residuals %s", label, residuals)
    return Classification(label, residuals[""], residuals["p"], residuals["f"], residuals["fp"])
