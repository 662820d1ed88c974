"""Fixed-step RK4 integration and trajectory consistency measures."""

import logging
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence, Tuple

import numpy as np

from .exceptions import PoleError, StepTooLarge
from .expr import TIME, Expr, dependent, lambdify, parameter, substitute
from .systems import DynSystem

logger = logging.getLogger(__name__)

HALVED_STEP_TOL = 1e-6

Rhs = Callable[[float, np.ndarray], np.ndarray]


@dataclass
class Trajectory:
    """times has shape (N+1,); states has shape (N+1, n, batch)."""

    times: np.ndarray
    states: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def component(self, a: int) -> np.ndarray:
        """u^a over time, shape (N+1, batch)"""
        return self.states[:, a - 1, :]

    def start(self) -> "Trajectory":
        return Trajectory(self.times[:1], self.states[:1])


def _steps(t_span: Tuple[float, float], step: float) -> int:
    t0, t1 = t_span
    count = int(round((t1 - t0) / step))
    if count < 1:
        raise ValueError(f"step {step} does not fit in {t_span}")
    return count


def rk4(func: Rhs, y0: np.ndarray, t_span: Tuple[float, float], step: float) -> Trajectory:
    """Classical RK4 with a fixed step on states of shape (n, batch)."""
    y = np.array(y0, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    count = _steps(t_span, step)
    h = (t_span[1] - t_span[0]) / count
    times = t_span[0] + h * np.arange(count + 1)
    states = np.empty((count + 1,) + y.shape)
    states[0] = y
    for i in range(count):
        t = times[i]
        k1 = func(t, y)
        k2 = func(t + h / 2, y + h / 2 * k1)
        k3 = func(t + h / 2, y + h / 2 * k2)
        k4 = func(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise PoleError(f"solution blew up near t={t + h:.6g}", time=float(t + h))
        states[i + 1] = y
    return Trajectory(times, states)


def _compiled_rhs(ds: DynSystem, parameters: Mapping[str, float]) -> Rhs:
    missing = [p for p in ds.parameters if p not in parameters]
    if missing:
        raise KeyError(f"no value for parameters {', '.join(missing)}")
    compiled = ds.compiled()
    values = [float(parameters[p]) for p in ds.parameters]

    def func(t: float, y: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            out = compiled(t, *y, *values)
        return np.array(np.broadcast_arrays(*out, y[0]))[:-1]

    return func


def _checked(
    func: Rhs, y0: np.ndarray, t_span: Tuple[float, float], step: float
) -> Tuple[Trajectory, float]:
    coarse = rk4(func, y0, t_span, step)
    fine = rk4(func, y0, t_span, step / 2)
    return coarse, float(np.max(np.abs(coarse.final - fine.final)))


def integrate_callable(
    func: Rhs,
    y0: np.ndarray,
    t_span: Tuple[float, float] = (0.0, 1.0),
    step: float = 1e-4,
    check_step: bool = True,
) -> Trajectory:
    """RK4 with a halved-step comparison; one rerun at step/10 when they disagree."""
    if not check_step:
        return rk4(func, y0, t_span, step)
    trajectory, discrepancy = _checked(func, y0, t_span, step)
    if discrepancy <= HALVED_STEP_TOL:
        return trajectory
    logger.warning(
        "halved-step discrepancy %.3g at step %g; rerunning at step %g",
        discrepancy,
        step,
        step / 10,
    )
    trajectory, discrepancy = _checked(func, y0, t_span, step / 10)
    if discrepancy > HALVED_STEP_TOL:
        message = f"step {step / 10} still disagrees with its half by {discrepancy:.3g}"
        raise StepTooLarge(message, discrepancy)
    return trajectory


def integrate(
    ds: DynSystem,
    u0: Sequence,
    t_span: Tuple[float, float] = (0.0, 1.0),
    step: float = 1e-4,
    parameters: Optional[Mapping[str, float]] = None,
    check_step: bool = True,
) -> Trajectory:
    """Integrate u' = f(t, u) from u0 (shape (n,) or (n, batch))."""
    y0 = np.array(u0, dtype=float)
    if y0.shape[0] != ds.n:
        raise ValueError(f"initial state has {y0.shape[0]} components, system has {ds.n}")
    func = _compiled_rhs(ds, parameters or {})
    return integrate_callable(func, y0, t_span, step, check_step)


def evaluate_along(
    exprs: Sequence[Expr],
    trajectory: Trajectory,
    n: int,
    parameters: Optional[Mapping[str, float]] = None,
) -> np.ndarray:
    """Values of order-0 expressions along a trajectory, shape (len(exprs), N+1, batch)."""
    parameters = dict(parameters or {})
    symbols = [TIME] + [dependent(a) for a in range(1, n + 1)] + [parameter(p) for p in parameters]
    compiled = lambdify(list(exprs), symbols)
    times = np.broadcast_to(trajectory.times[:, None], trajectory.states[:, 0, :].shape)
    with np.errstate(all="ignore"):
        values = compiled(times, *np.moveaxis(trajectory.states, 1, 0), *parameters.values())
    return np.array(np.broadcast_arrays(*values, times))[:-1]


def trajectory_discrepancy(
    full: Trajectory,
    projection: Sequence[Expr],
    reduced: Trajectory,
    n: int,
    parameters: Optional[Mapping[str, float]] = None,
) -> float:
    """sup |w(u(t)) - w_reduced(t)| over the common time grid."""
    projected = evaluate_along(projection, full, n, parameters)
    if full.times.shape != reduced.times.shape:
        raise ValueError("trajectories use different time grids")
    return float(np.max(np.abs(np.moveaxis(projected, 0, 1) - reduced.states)))


def finite_max(values: np.ndarray, label: str) -> float:
    """Largest entry, or inf when any entry is nan or infinite."""
    bad = int(np.count_nonzero(~np.isfinite(values)))
    if bad:
        logger.warning("%s: %d of %d points are not finite", label, bad, values.size)
        return float("inf")
    return float(np.max(values))


def ratio_consistency(
    ds: DynSystem,
    trajectory: Trajectory,
    numerator: Expr,
    denominator: Expr,
    psi: Expr,
    w: Sequence[Expr],
    parameters: Optional[Mapping[str, float]] = None,
) -> float:
    """max |dw_i/dt - psi(w) dw_j/dt| along the trajectory; psi is written in w1, w2, ..."""
    psi_u = substitute(psi, {dependent(j): e for j, e in enumerate(w, start=1)})
    exprs = [ds.flow_derivative(numerator), ds.flow_derivative(denominator), psi_u]
    d_num, d_den, ratio = evaluate_along(exprs, trajectory, ds.n, parameters)
    return finite_max(np.abs(d_num - ratio * d_den), "ratio")


def constant_drift(
    trajectory: Trajectory,
    constant: Expr,
    n: int,
    parameters: Optional[Mapping[str, float]] = None,
) -> float:
    """max relative change of a first integral along the trajectory"""
    (values,) = evaluate_along([constant], trajectory, n, parameters)
    start = values[0]
    return float(np.max(np.abs(values - start) / np.maximum(1.0, np.abs(start))))


def closed_form_error(
    trajectory: Trajectory,
    solution: Sequence[Expr],
    parameters: Optional[Mapping[str, float]] = None,
) -> float:
    """sup |u(t) - s(t)| for closed-form solutions written in t."""
    parameters = dict(parameters or {})
    compiled = lambdify(list(solution), [TIME] + [parameter(p) for p in parameters])
    values = compiled(trajectory.times, *parameters.values())
    exact = np.array(np.broadcast_arrays(*values, trajectory.times))[:-1]
    return float(np.max(np.abs(trajectory.states[:, : len(solution), 0] - exact.T)))


def initial_conditions(
    n: int,
    count: int,
    rng: np.random.Generator,
    low: float = 0.5,
    high: float = 1.5,
) -> np.ndarray:
    """Random starting states of shape (n, count)."""
    return rng.uniform(low, high, size=(n, count))
