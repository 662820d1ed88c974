"""Tests for the expression parser."""

import pytest

from symmetry_reduction.exceptions import ExprSyntaxError, JetOrderExceeded, UnknownSymbol
from symmetry_reduction.expr import TIME, Sym, dependent, evaluate, jet, parameter
from symmetry_reduction.parser import (
    ParseContext,
    alias_map,
    default_names,
    parse,
    parse_definitions,
    parse_value,
)

POINT = {
    TIME: 0.5,
    dependent(1): 1.5,
    dependent(2): -0.75,
    dependent(3): 2.0,
    parameter("a"): 3.0,
}


def value(e):
    return evaluate(e, POINT)


def test_precedence_and_associativity(ex):
    assert value(ex("1 + 2*u1^2")) == pytest.approx(1 + 2 * 1.5 ** 2)
    assert value(ex("2^3^2")) == pytest.approx(2 ** 9)
    assert value(ex("-u1^2")) == pytest.approx(-(1.5 ** 2))
    assert value(ex("u1 - u2 - u3")) == pytest.approx(1.5 + 0.75 - 2.0)
    assert value(ex("u1/u2/u3")) == pytest.approx(1.5 / -0.75 / 2.0)


def test_names_functions_and_parameters(ex):
    e = ex("a*t + sqrt(u3) * exp(0) - log(u1)")
    assert value(e) == pytest.approx(3.0 * 0.5 + 2.0 ** 0.5 - 0.4054651081081644)


def test_rational_literals_are_exact(ex):
    assert ex("0.25") == ex("1/4")
    assert value(ex("3/2*u3")) == pytest.approx(3.0)


@pytest.mark.parametrize("text", ["u1''", "u{1,2}", "d(u1, 2)", "d(u1', 1)", "u{1}''"])
def test_derivative_spellings_agree(ex, text):
    assert ex(text) == Sym(jet(1, 2))


def test_zero_order_derivative_is_the_variable(ex):
    assert ex("d(u2, 0)") == Sym(dependent(2))


def test_jet_order_bound():
    context = ParseContext(1, q_max=2)
    assert parse("u1''", context) == Sym(jet(1, 2))
    with pytest.raises(JetOrderExceeded):
        parse("u1'''", context)


def test_unknown_symbols(ex):
    with pytest.raises(UnknownSymbol) as excinfo:
        ex("u1 + b")
    assert excinfo.value.name == "b"
    assert excinfo.value.offset == 5
    with pytest.raises(UnknownSymbol):
        ex("u4")


@pytest.mark.parametrize(
    "text, offset",
    [
        ("u1 +* 2", 4),
        ("(u1 + 2", 7),
        ("u1 # 2", 3),
        ("u1 / 0", 3),
        ("u1^u2", 3),
        ("", 0),
        ("t'", 1),
    ],
)
def test_syntax_errors_carry_offsets(ex, text, offset):
    with pytest.raises(ExprSyntaxError) as excinfo:
        ex(text)
    assert excinfo.value.offset == offset


def test_offsets_count_bytes():
    with pytest.raises(ExprSyntaxError) as excinfo:
        parse("u1 + é", ParseContext(1))
    assert excinfo.value.offset == 5
    with pytest.raises(ExprSyntaxError) as excinfo:
        parse("u1\u00a0+* 2", ParseContext(1))
    assert excinfo.value.offset == 5


def test_definitions_build_on_each_other():
    context = ParseContext(2)
    definitions = parse_definitions({"r": "u1^2 + u2^2", "s": "2*r"}, context)
    e = parse("s - r", context.with_definitions(definitions))
    assert evaluate(e, {dependent(1): 3.0, dependent(2): 4.0}) == pytest.approx(25.0)


def test_aliases_shadow_builtins():
    context = ParseContext(2).with_aliases(alias_map(("w1", "w2")))
    assert parse("w2", context) == Sym(dependent(2))
    context = ParseContext(1).with_aliases({"t": dependent(1)})
    assert parse("t", context) == Sym(dependent(1))


def test_parse_value_accepts_numbers():
    context = ParseContext(1)
    assert parse_value(2, context) == parse("2", context)
    assert parse_value(0.5, context) == parse("1/2", context)
    with pytest.raises(ExprSyntaxError):
        parse_value([1, 2], context)


def test_default_names():
    assert default_names(1) == ("w",)
    assert default_names(2) == ("w1", "w2")
    assert default_names(2, "v") == ("v1", "v2")
