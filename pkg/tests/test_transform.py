"""Tests for conversion between dynamical systems and scalar ODEs."""

import numpy as np
import pytest

from symmetry_reduction.exceptions import DimensionMismatch, RankDeficientChain
from symmetry_reduction.expr import ONE, TIME, Sym, dependent, evaluate, jet, sub
from symmetry_reduction.parser import ParseContext, parse, parse_many
from symmetry_reduction.systems import DynSystem, OdeSystem
from symmetry_reduction.transform import (
    autonomize,
    ds_to_ode,
    ode_to_ds,
    same_solved_form,
    transfer_reduction,
)

PLANE = ParseContext(2)
SCALAR = ParseContext(1)


def ds_of(texts, context=PLANE):
    return DynSystem(tuple(parse_many(texts, context)))


@pytest.fixture
def planar():
    """Planar system with the scaling symmetry u1 d/du1 - u2 d/du2."""
    return ds_of(["u1 + u1^2*u2", "u2 + u1*u2^2"])


def test_second_order_equation_from_planar_system(sampler, planar):
    conv = ds_to_ode(planar, sampler)
    assert conv.symbolic
    assert conv.order == 2
    (rhs,) = conv.ode.solved
    expected = parse("-2*u1' + 3*u1'^2/u1", SCALAR)
    assert sampler.is_zero(sub(rhs, expected)).ok
    assert conv.ode.render_equations()[0].startswith("y''=")


def test_relations_transfer_to_jets(sampler, planar):
    conv = ds_to_ode(planar, sampler)
    (relation,) = transfer_reduction(conv, None, sampler, extra=[("w", parse("u1*u2", PLANE))])
    assert relation.name == "w"
    assert relation.verdict.ok
    assert sampler.is_zero(sub(relation.expr, parse("u1'/u1 - 1", SCALAR))).ok
    assert "y'" in relation.render({dependent(1): "y"})


def test_initial_jets(sampler, planar):
    conv = ds_to_ode(planar, sampler)
    assert conv.initial_jets([1.0, 0.5]) == pytest.approx([1.0, 1.5])


def test_round_trip_through_companion_system(sampler, planar):
    ode = ds_to_ode(planar, sampler).ode
    companion = ode_to_ds(ode)
    assert companion.n == 2
    assert companion.names == ("y", "y1")
    back = ds_to_ode(companion, sampler).ode
    assert same_solved_form(back, ode, sampler).ok


def test_round_trip_rejects_different_orders(sampler):
    first = OdeSystem.from_solved((1,), (parse("u1", SCALAR),))
    second = OdeSystem.from_solved((2,), (parse("u1", SCALAR),))
    with pytest.raises(DimensionMismatch):
        same_solved_form(first, second, sampler)


def test_companion_system_needs_scalar_equation():
    ode = OdeSystem.from_solved((1, 1), parse_many(["u2", "u1"], PLANE))
    with pytest.raises(DimensionMismatch):
        ode_to_ds(ode)


def test_autonomize_prepends_time():
    ds = DynSystem((Sym(TIME) * Sym(dependent(1)),), names=("x",))
    autonomous = autonomize(ds)
    assert autonomous.n == 2
    assert autonomous.f[0] == ONE
    point = {dependent(1): 0.5, dependent(2): 3.0}
    assert evaluate(autonomous.f[1], point) == pytest.approx(1.5)
    assert autonomous.names == ("t0", "x")
    assert not autonomous.has_explicit_time()
    plain = ds_of(["u2", "u1"])
    assert autonomize(plain) is plain


def test_time_variable_as_independent_variable(sampler):
    ds = ds_of(["1", "t + u1*u2"])
    conv = ds_to_ode(ds, sampler, pivot=2, time_index=1)
    assert conv.order == 1
    (rhs,) = conv.ode.solved
    assert sampler.is_zero(sub(rhs, parse("t + t*u1", SCALAR))).ok
    assert conv.initial_jets([0.25, 2.0]) == pytest.approx([2.0])


def test_time_variable_must_advance_at_unit_rate(sampler):
    with pytest.raises(DimensionMismatch):
        ds_to_ode(ds_of(["2", "u2"]), sampler, pivot=2, time_index=1)


@pytest.mark.parametrize("pivot, time_index", [(0, None), (3, None), (1, 1)])
def test_pivot_must_be_a_state(sampler, planar, pivot, time_index):
    with pytest.raises(DimensionMismatch):
        ds_to_ode(planar, sampler, pivot=pivot, time_index=time_index)


def test_rank_deficient_chain(sampler):
    with pytest.raises(RankDeficientChain):
        ds_to_ode(ds_of(["u1", "u2"]), sampler)


def test_numeric_inversion_when_chain_is_transcendental(sampler):
    conv = ds_to_ode(ds_of(["exp(u2)", "-u1"]), sampler)
    assert not conv.symbolic
    assert conv.ode is None
    numeric = conv.numeric()
    y, y_dot = 0.8, 1.2
    top, state = numeric.top(0.0, [y, y_dot], [0.7, 0.1])
    assert top == pytest.approx(-y * y_dot, rel=1e-9)
    assert state == pytest.approx([y, np.log(y_dot)], rel=1e-9)
    (relation,) = transfer_reduction(conv, None, sampler, extra=[("u2", parse("u2", PLANE))])
    assert relation.expr is None
    assert relation.render() == "<numeric>"


def test_implicit_residual_vanishes_at_inverted_state(sampler):
    conv = ds_to_ode(ds_of(["exp(u2)", "-u1"]), sampler)
    residual = conv.implicit_residual()
    assert jet(1, 2) in residual.free_symbols
    top, state = conv.numeric().top(0.0, [0.8, 1.2], [0.7, 0.1])
    point = {jet(1, 2): top, dependent(1): state[0], dependent(2): state[1]}
    assert evaluate(residual, point) == pytest.approx(0.0, abs=1e-9)


def test_solved_form_satisfies_its_equations(sampler):
    ode = OdeSystem.from_equations((parse("u1'' + u1*u1'", SCALAR),))
    assert ode.check_solved_form(sampler).ok


def test_inconsistent_solved_form_is_detected(sampler):
    equation = parse("u1'' + u1", SCALAR)
    ode = OdeSystem((equation,), (2,), (parse("u1", SCALAR),))
    assert not ode.check_solved_form(sampler).ok


def test_solved_form_must_stay_within_the_system():
    equation = parse("u1'' + u1", SCALAR)
    with pytest.raises(DimensionMismatch):
        OdeSystem((equation,), (2,), (parse("u2", PLANE),))
    with pytest.raises(DimensionMismatch):
        OdeSystem((equation,), (2,), ())
