"""Monomial ansatz bases, null spaces and exact rational re-expression of sampled data."""

import itertools
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .expr import ONE, ZERO, Const, Expr, Sym, Symbol, add, div, mul, power

logger = logging.getLogger(__name__)

Exponents = Tuple[int, ...]

NULL_RTOL = 1e-9
FIT_RTOL = 1e-9
MAX_DENOMINATOR = 10_000


def monomial_exponents(nvars: int, degree: int, min_degree: int = 0) -> List[Exponents]:
    """Exponent tuples of total degree in [min_degree, degree], graded then lexicographic."""
    out: List[Exponents] = []
    for total in range(min_degree, degree + 1):
        block = [
            e
            for e in itertools.product(range(total + 1), repeat=nvars)
            if sum(e) == total
        ]
        out.extend(sorted(block, reverse=True))
    return out


def laurent_exponents(nvars: int, low: int = -1, high: int = 1) -> List[Exponents]:
    """Exponent tuples in [low, high]^nvars ordered by number of non-zero entries."""
    block = list(itertools.product(range(low, high + 1), repeat=nvars))
    return sorted(
        block, key=lambda e: (sum(1 for x in e if x), sum(abs(x) for x in e), [-x for x in e])
    )


def monomial(symbols: Sequence[Symbol], exponents: Exponents) -> Expr:
    return mul(*(power(Sym(s), k) for s, k in zip(symbols, exponents) if k))


def monomial_values(values: np.ndarray, exponents: Sequence[Exponents]) -> np.ndarray:
    """values has shape (nvars, m); returns the (m, len(exponents)) design matrix."""
    m = values.shape[1]
    columns = []
    for e in exponents:
        column = np.ones(m)
        for row, k in zip(values, e):
            if k:
                column = column * row ** k
        columns.append(column)
    if not columns:
        return np.zeros((m, 0))
    return np.column_stack(columns)


def rationalize(
    x: float, max_denominator: int = MAX_DENOMINATOR, tol: float = 1e-7
) -> Optional[Fraction]:
    """Nearest simple fraction, or None when x is not close to one."""
    if not np.isfinite(x):
        return None
    candidate = Fraction(x).limit_denominator(max_denominator)
    if abs(float(candidate) - x) <= tol * max(1.0, abs(x)):
        return candidate
    return None


def null_space(matrix: np.ndarray, rtol: float = NULL_RTOL) -> np.ndarray:
    """Orthonormal null-space basis as columns."""
    if matrix.size == 0:
        return np.eye(matrix.shape[1])
    scale = np.abs(matrix).max(axis=0)
    scale[scale == 0] = 1.0
    _, singular, vt = np.linalg.svd(matrix / scale, full_matrices=True)
    top = singular[0] if singular.size else 0.0
    rank = int((singular > rtol * max(top, 1e-300)).sum())
    basis = vt[rank:].T
    return basis / scale[:, None]


def rref(matrix: np.ndarray, tol: float = 1e-9) -> Tuple[np.ndarray, List[int]]:
    """Reduced row echelon form with partial pivoting."""
    a = np.array(matrix, dtype=float)
    rows, cols = a.shape
    pivots: List[int] = []
    r = 0
    for c in range(cols):
        if r >= rows:
            break
        p = r + int(np.argmax(np.abs(a[r:, c])))
        if abs(a[p, c]) <= tol:
            continue
        a[[r, p]] = a[[p, r]]
        a[r] = a[r] / a[r, c]
        for i in range(rows):
            if i != r:
                a[i] = a[i] - a[i, c] * a[r]
        pivots.append(c)
        r += 1
    return a[:r], pivots


def canonical_null_vectors(matrix: np.ndarray, rtol: float = NULL_RTOL) -> List[np.ndarray]:
    """Null-space basis in echelon form: pivots at the earliest columns, pivot entries 1."""
    basis = null_space(matrix, rtol)
    if basis.shape[1] == 0:
        return []
    reduced, _ = rref(basis.T)
    return [row for row in reduced]


def rationalize_vector(vector: np.ndarray) -> Optional[List[Fraction]]:
    out = []
    for x in vector:
        if abs(x) < 1e-9:
            out.append(Fraction(0))
            continue
        q = rationalize(float(x))
        if q is None:
            return None
        out.append(q)
    return out


def combination(coefficients: Sequence[Fraction], basis: Sequence[Expr]) -> Expr:
    return add(*(mul(Const(c), b) for c, b in zip(coefficients, basis) if c != 0))


@dataclass
class Fit:
    """An exact candidate found from samples; still to be confirmed symbolically."""

    expr: Expr
    residual: float


def fit_polynomial(
    target: np.ndarray,
    coords: np.ndarray,
    symbols: Sequence[Symbol],
    max_degree: int = 4,
) -> Optional[Fit]:
    """Lowest-degree polynomial in ``symbols`` reproducing ``target`` at the sample columns."""
    scale = max(1.0, float(np.abs(target).max())) if target.size else 1.0
    for degree in range(max_degree + 1):
        exponents = monomial_exponents(len(symbols), degree)
        design = monomial_values(coords, exponents)
        if design.shape[0] < design.shape[1]:
            break
        solution, *_ = np.linalg.lstsq(design, target, rcond=None)
        residual = float(np.abs(design @ solution - target).max())
        if residual > FIT_RTOL * scale * 100:
            continue
        coefficients = rationalize_vector(solution)
        if coefficients is None:
            continue
        basis = [monomial(symbols, e) for e in exponents]
        return Fit(combination(coefficients, basis), residual)
    return None


def fit_rational(
    target: np.ndarray,
    coords: np.ndarray,
    symbols: Sequence[Symbol],
    max_degree: int = 4,
) -> Optional[Fit]:
    """P/Q in ``symbols`` with P - target*Q = 0 at every sample, lowest degrees first."""
    polynomial = fit_polynomial(target, coords, symbols, max_degree)
    if polynomial is not None:
        return polynomial
    pairs = sorted(
        ((dn, dd) for dn in range(max_degree + 1) for dd in range(1, max_degree + 1)),
        key=lambda p: (p[0] + p[1], p[1]),
    )
    for dn, dd in pairs:
        num_exp = monomial_exponents(len(symbols), dn)
        den_exp = monomial_exponents(len(symbols), dd)
        num_design = monomial_values(coords, num_exp)
        den_design = monomial_values(coords, den_exp)
        if num_design.shape[0] < 1.5 * (num_design.shape[1] + den_design.shape[1]):
            continue
        system = np.hstack([num_design, -target[:, None] * den_design])
        for vector in canonical_null_vectors(system):
            num_part = vector[: len(num_exp)]
            den_part = vector[len(num_exp):]
            if np.abs(den_part).max() < 1e-9:
                continue
            lead = den_part[np.flatnonzero(np.abs(den_part) > 1e-9)[0]]
            coefficients = rationalize_vector(vector / lead)
            if coefficients is None:
                continue
            split = len(num_exp)
            numerator = combination(coefficients[:split], [monomial(symbols, e) for e in num_exp])
            denominator = combination(coefficients[split:], [monomial(symbols, e) for e in den_exp])
            if denominator == ZERO:
                continue
            q_values = den_design @ np.array([float(c) for c in coefficients[len(num_exp):]])
            p_values = num_design @ np.array([float(c) for c in coefficients[: len(num_exp)]])
            with np.errstate(divide="ignore", invalid="ignore"):
                residual = float(np.nanmax(np.abs(p_values / q_values - target)))
            logger.debug("rational fit degrees (%d, %d) residual %.3g", dn, dd, residual)
            return Fit(div(numerator, denominator), residual)
    return None


def fit_expression(
    target: np.ndarray,
    coords: np.ndarray,
    symbols: Sequence[Symbol],
    max_degree: int = 4,
    rational: bool = True,
) -> Optional[Fit]:
    finite = np.isfinite(target) & np.all(np.isfinite(coords), axis=0)
    target, coords = target[finite], coords[:, finite]
    if target.size == 0:
        return None
    if rational:
        return fit_rational(target, coords, symbols, max_degree)
    return fit_polynomial(target, coords, symbols, max_degree)


def constant_value(values: np.ndarray, tol: float = 1e-8) -> Optional[Expr]:
    """Exact constant when the samples agree."""
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return None
    center = float(np.median(finite))
    if np.abs(finite - center).max() > tol * max(1.0, abs(center)):
        return None
    q = rationalize(center)
    if q is None:
        return None
    return Const(q) if q != 1 else ONE
