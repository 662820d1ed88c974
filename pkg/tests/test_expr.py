"""Tests for expression trees: construction, calculus, evaluation and rendering."""

import math
from fractions import Fraction

import numpy as np
import pytest

from symmetry_reduction.exceptions import DomainError, PoleError, UnknownSymbol
from symmetry_reduction.expr import (
    ONE,
    TIME,
    ZERO,
    Const,
    Sym,
    apply,
    const,
    count_nodes,
    dependent,
    diff,
    div,
    evaluate,
    evaluate_batch,
    jet,
    jet_order,
    lambdify,
    mul,
    power,
    render,
    sub,
    substitute,
)


def test_smart_constructors_fold_constants(u1):
    assert (u1 + 0) == u1
    assert mul(u1, 1) == u1
    assert mul(u1, 0) == ZERO
    assert power(u1, 0) == ONE
    assert const(2) + const(3) == Const(Fraction(5))
    assert power(const(4), Fraction(1, 2)) == const(2)
    assert apply("exp", ZERO) == ONE
    assert apply("sqrt", const(9)) == const(3)


def test_structural_equality_and_hash(u1, u2):
    a = u1 * u2 + 1
    b = u1 * u2 + 1
    assert a == b
    assert hash(a) == hash(b)
    assert len({a, b}) == 1


def test_half_integer_powers_only(u1):
    with pytest.raises(ValueError):
        power(u1, Fraction(1, 3))


def test_diff_product_and_quotient(u1, u2):
    e = u1 ** 2 * u2 / (1 + u1)
    d = diff(e, dependent(1))
    point = {dependent(1): 0.7, dependent(2): 1.3}
    expected = (2 * 0.7 * 1.3 * 1.7 - 0.7 ** 2 * 1.3) / 1.7 ** 2
    assert evaluate(d, point) == pytest.approx(expected, rel=1e-12)


def test_diff_elementary_functions(u1):
    point = {dependent(1): 0.4}
    cases = [
        (apply("exp", u1), math.exp(0.4)),
        (apply("log", u1), 1 / 0.4),
        (apply("sin", u1), math.cos(0.4)),
        (apply("cos", u1), -math.sin(0.4)),
        (apply("arctan", u1), 1 / (1 + 0.16)),
        (apply("sqrt", u1), 0.5 / math.sqrt(0.4)),
    ]
    for e, value in cases:
        assert evaluate(diff(e, dependent(1)), point) == pytest.approx(value, rel=1e-12)


def test_jets_are_independent_coordinates(u1, u1_dot):
    assert diff(u1_dot * u1, jet(1, 1)) == u1
    assert diff(u1_dot, dependent(1)) == ZERO
    assert jet_order(u1_dot * u1) == 1
    assert jet_order(u1) == 0


def test_substitute_is_simultaneous(u1, u2):
    swapped = substitute(u1 - 2 * u2, {dependent(1): u2, dependent(2): u1})
    point = {dependent(1): 0.3, dependent(2): 1.1}
    assert evaluate(swapped, point) == pytest.approx(1.1 - 0.6)


def test_evaluate_reports_poles_and_domain(u1):
    with pytest.raises(PoleError) as excinfo:
        evaluate(div(ONE, sub(u1, u1)), {dependent(1): 1.0})
    assert excinfo.value.assignment == {dependent(1): 1.0}
    with pytest.raises(DomainError):
        evaluate(apply("log", u1), {dependent(1): -1.0})
    with pytest.raises(UnknownSymbol):
        evaluate(u1, {})


def test_evaluate_batch_marks_poles_with_nan(u1):
    values = evaluate_batch(div(ONE, u1), {dependent(1): np.array([2.0, 0.0, 4.0])})
    assert values[0] == pytest.approx(0.5)
    assert np.isnan(values[1])
    assert values[2] == pytest.approx(0.25)


def test_lambdify_matches_evaluate(u1, u2):
    e = apply("sin", u1) * u2 ** 2 - 3 / (1 + u1) + Sym(TIME)
    compiled = lambdify([e], [TIME, dependent(1), dependent(2)])
    (value,) = compiled(0.5, 0.3, 1.2)
    point = {TIME: 0.5, dependent(1): 0.3, dependent(2): 1.2}
    assert float(value) == pytest.approx(evaluate(e, point), rel=1e-14)


def test_lambdify_rejects_missing_symbols(u1, u2):
    with pytest.raises(UnknownSymbol):
        lambdify([u1 * u2], [dependent(1)])


def test_render_is_compact(u1, u2, u1_dot):
    assert render(u1 - u2) == "u1-u2"
    assert render(2 * u1 * u2) == "2*u1*u2"
    assert render(u1 ** 2) == "u1^2"
    assert render(div(u1, u2 + 1)) == "u1/(u2+1)"
    assert render(u1_dot, {dependent(1): "y"}) == "y'"


def test_count_nodes_shares_subtrees(u1):
    shared = u1 * u1 + 1
    assert count_nodes(shared * shared) <= count_nodes(shared) + 1
