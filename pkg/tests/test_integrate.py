"""Tests for RK4 integration and trajectory measures."""

import math

import numpy as np
import pytest

from symmetry_reduction.exceptions import PoleError, StepTooLarge
from symmetry_reduction.integrate import (
    closed_form_error,
    constant_drift,
    Trajectory,
    evaluate_along,
    finite_max,
    initial_conditions,
    integrate,
    integrate_callable,
    ratio_consistency,
    rk4,
    trajectory_discrepancy,
)
from symmetry_reduction.parser import ParseContext, parse, parse_many
from symmetry_reduction.sampling import make_rng
from symmetry_reduction.systems import DynSystem

SCALAR = ParseContext(1)
PLANE = ParseContext(2, parameters=("k",))


def scalar(text):
    return DynSystem((parse(text, SCALAR),))


def test_tanh_from_riccati_equation():
    trajectory = integrate(scalar("1 - u1^2"), [0.0], (0.0, 1.0), 0.01)
    error = closed_form_error(trajectory, [parse("(exp(2*t) - 1)/(exp(2*t) + 1)", SCALAR)])
    assert error < 1e-7
    assert trajectory.final[0, 0] == pytest.approx(math.tanh(1.0), abs=1e-8)


def test_logistic_growth_before_blow_up():
    trajectory = integrate(scalar("2*u1 + 2*u1^2"), [1.0], (0.0, 0.1), 0.001)
    exact = math.exp(0.2) / (2 - math.exp(0.2))
    assert trajectory.final[0, 0] == pytest.approx(exact, rel=1e-8)


def test_fourth_order_convergence():
    ds = scalar("1 - u1^2")
    exact = [parse("(exp(2*t) - 1)/(exp(2*t) + 1)", SCALAR)]
    coarse = closed_form_error(integrate(ds, [0.0], (0.0, 2.0), 0.1, check_step=False), exact)
    fine = closed_form_error(integrate(ds, [0.0], (0.0, 2.0), 0.05, check_step=False), exact)
    assert 12 <= coarse / fine <= 20


def test_blow_up_raises_pole_error():
    with pytest.raises(PoleError) as excinfo:
        rk4(lambda t, y: y ** 2, np.array([1.0]), (0.0, 2.0), 0.01)
    assert 0.9 < excinfo.value.time <= 2.0


def test_step_that_never_settles():
    # stiff decay with a step far outside the stability region
    with pytest.raises(StepTooLarge):
        integrate_callable(lambda t, y: -1e6 * y, np.array([1.0]), (0.0, 1e-3), 1e-4)


def test_batched_states_and_parameters():
    ds = DynSystem(tuple(parse_many(["k*u1", "-u2"], PLANE)), ("k",))
    u0 = np.array([[1.0, 2.0], [1.0, 3.0]])
    trajectory = integrate(ds, u0, (0.0, 0.5), 0.01, parameters={"k": 2.0})
    assert trajectory.states.shape == (51, 2, 2)
    assert trajectory.final[0] == pytest.approx(u0[0] * math.exp(1.0), rel=1e-8)
    assert trajectory.component(2)[-1] == pytest.approx(u0[1] * math.exp(-0.5), rel=1e-8)


def test_missing_parameter_values():
    ds = DynSystem(tuple(parse_many(["k*u1", "-u2"], PLANE)), ("k",))
    with pytest.raises(KeyError):
        integrate(ds, [1.0, 1.0], (0.0, 0.1), 0.01)


def test_initial_state_must_match_dimension():
    with pytest.raises(ValueError):
        integrate(scalar("u1"), [1.0, 2.0], (0.0, 0.1), 0.01)


def test_step_must_fit_span():
    with pytest.raises(ValueError):
        integrate(scalar("u1"), [1.0], (0.0, 0.1), 1.0)


def test_projection_of_planar_flow_matches_reduced_flow():
    planar = DynSystem(tuple(parse_many(["u1 + u1^2*u2", "u2 + u1*u2^2"], PLANE)))
    reduced = scalar("2*u1 + 2*u1^2")
    u0 = np.array([[0.5, 0.6], [0.4, 0.7]])
    full = integrate(planar, u0, (0.0, 0.15), 0.001)
    w0 = (u0[0] * u0[1])[None, :]
    projected = integrate(reduced, w0, (0.0, 0.15), 0.001)
    w = [parse("u1*u2", PLANE)]
    assert trajectory_discrepancy(full, w, projected, 2) < 1e-8
    along = evaluate_along(w, full, 2)
    assert along.shape == (1, 151, 2)


def test_first_integral_and_ratio_along_rotation():
    rotation = DynSystem(tuple(parse_many(["-u2", "u1"], PLANE)))
    trajectory = integrate(rotation, [[1.0], [0.5]], (0.0, 1.0), 0.01)
    assert constant_drift(trajectory, parse("u1^2 + u2^2", PLANE), 2) < 1e-8
    # d(u1^2)/dt = -d(u2^2)/dt along every orbit
    gap = ratio_consistency(
        rotation,
        trajectory,
        parse("u1^2", PLANE),
        parse("u2^2", PLANE),
        parse("-1", PLANE),
        parse_many(["u1^2", "u2^2"], PLANE),
    )
    assert gap < 1e-12


def test_ratio_through_a_pole_is_not_consistent():
    rotation = DynSystem(tuple(parse_many(["-u2", "u1"], PLANE)))
    states = np.array([[1.0, 1.0], [0.0, 1.0], [1.0, 1.0]])[:, :, None]
    trajectory = Trajectory(np.array([0.0, 0.5, 1.0]), states)
    gap = ratio_consistency(
        rotation,
        trajectory,
        parse("u1", PLANE),
        parse("u2", PLANE),
        parse("1/u1", PLANE),
        parse_many(["u1", "u2"], PLANE),
    )
    assert gap == math.inf


def test_finite_max():
    assert finite_max(np.array([0.5, 2.0]), "x") == 2.0
    assert finite_max(np.array([0.5, np.nan]), "x") == math.inf


def test_initial_conditions_are_reproducible():
    first = initial_conditions(3, 4, make_rng(5, "ic"), 0.3, 0.8)
    second = initial_conditions(3, 4, make_rng(5, "ic"), 0.3, 0.8)
    assert first.shape == (3, 4)
    assert np.array_equal(first, second)
    assert np.all((first >= 0.3) & (first < 0.8))


def test_trajectory_grids_must_agree():
    ds = scalar("u1")
    a = integrate(ds, [1.0], (0.0, 0.1), 0.01)
    b = integrate(ds, [1.0], (0.0, 0.1), 0.02)
    with pytest.raises(ValueError):
        trajectory_discrepancy(a, [parse("u1", SCALAR)], b, 1)
