"""Tests for brackets, determining equations, construction and classification."""

import pytest

from symmetry_reduction.exceptions import (
    DimensionMismatch,
    NotStandardSymmetry,
    VerticalFieldRequired,
    ZeroScaling,
)
from symmetry_reduction.expr import ONE, TIME, ZERO, Sym, sub
from symmetry_reduction.jet import SigmaSpec, VectorField
from symmetry_reduction.parser import ParseContext, parse, parse_many
from symmetry_reduction.symmetry import (
    SymmetrySet,
    check_ds_sigma_symmetry,
    check_involution,
    check_ode_sigma_symmetry,
    check_prolonged_involution,
    classify_symmetry,
    construct_sigma_symmetric,
    lie_bracket,
    orbital_spec,
    scale_to_orbital,
    symmetry_rank,
)
from symmetry_reduction.systems import DynSystem, OdeSystem

LINEAR = ParseContext(3, parameters=("a",))
PLANE = ParseContext(2)


def field(texts, context=LINEAR, name=""):
    return VectorField.vertical(parse_many(texts, context), name)


def system(texts, context=LINEAR, parameters=()):
    return DynSystem(tuple(parse_many(texts, context)), tuple(parameters))


@pytest.fixture
def linear_fields():
    return [field(["u1", "u2", "u3"], name="X1"), field(["u2", "u1", "0"], name="X2")]


@pytest.fixture
def linear_system():
    return system(["u1 - u2", "-u1 + u2", "a*u3"], parameters=("a",))


def test_bracket_of_translation_and_shear(sampler):
    translation = field(["1", "0"], PLANE)
    shear = field(["0", "u1"], PLANE)
    bracket = lie_bracket(translation, shear)
    assert sampler.all_zero([bracket.tau, bracket.phi[0], sub(bracket.phi[1], ONE)]).ok


def test_bracket_includes_time_component(sampler):
    x = VectorField(Sym(TIME), tuple(parse_many(["u1", "0"], PLANE)))
    y = VectorField(ONE, tuple(parse_many(["0", "0"], PLANE)))
    bracket = lie_bracket(x, y)
    assert sampler.is_zero(sub(bracket.tau, -ONE)).ok


def test_bracket_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        lie_bracket(field(["1"], ParseContext(1)), field(["1", "0"], PLANE))


def test_rank_and_involution(sampler, linear_fields):
    assert symmetry_rank(linear_fields, sampler) == 2
    involution = check_involution(linear_fields, sampler)
    assert involution.ok
    assert sampler.all_zero([c for plane in involution.nu for row in plane for c in row]).ok


def test_involution_with_nonzero_structure_constants(sampler):
    fields = [field(["1", "0"], PLANE), field(["u1", "u2"], PLANE)]
    involution = check_involution(fields, sampler)
    assert involution.ok
    # [d/du1, u1 d/du1 + u2 d/du2] = d/du1
    assert sampler.is_zero(sub(involution.nu[0][1][0], ONE)).ok
    assert sampler.is_zero(involution.nu[0][1][1]).ok
    assert sampler.is_zero(sub(involution.nu[1][0][0], -ONE)).ok


def test_standard_symmetry_of_linear_system(sampler, linear_fields, linear_system):
    sset = SymmetrySet.build(linear_fields, SigmaSpec.zero(2), sampler)
    assert sset.involution_verified
    assert check_ds_sigma_symmetry(linear_system, sset, sampler).ok


def test_construction(sampler, linear_fields, linear_system):
    sset = SymmetrySet.build(linear_fields, SigmaSpec.zero(2), sampler)
    construction = construct_sigma_symmetric(
        linear_system, sset, parse_many(["u1", "u3"], LINEAR), sampler
    )
    expected = parse_many(
        ["u1 - u2 + u1^2 + u2*u3", "-u1 + u2 + u1*u2 + u1*u3", "a*u3 + u1*u3"], LINEAR
    )
    assert sampler.all_zero([sub(a, b) for a, b in zip(construction.ds.f, expected)]).ok
    sigma = construction.spec.sigma
    expected_sigma = parse_many(["u1", "u3", "u2", "0"], LINEAR)
    actual_sigma = [sigma[0][0], sigma[0][1], sigma[1][0], sigma[1][1]]
    assert sampler.all_zero([sub(a, b) for a, b in zip(actual_sigma, expected_sigma)]).ok
    assert construction.report.ok

    deformed = SymmetrySet(sset.fields, construction.spec, sset.rank, True)
    assert check_prolonged_involution(construction.ds, deformed, sampler).ok


def translations_with_sigma(entry, sampler):
    fields = [field(["1", "0"], PLANE), field(["0", "1"], PLANE)]
    sigma = ((ZERO, parse(entry, PLANE)), (ZERO, ZERO))
    return SymmetrySet.build(fields, SigmaSpec(sigma), sampler)


def test_prolonged_brackets_are_taken_on_the_jet_space(sampler):
    # sigma_12 = u1' only touches the u2' coefficient, which d/du2 never sees
    sset = translations_with_sigma("u1'", sampler)
    assert check_prolonged_involution(system(["u2", "0"], PLANE), sset, sampler).ok


def test_prolonged_involution_detects_broken_brackets(sampler):
    sset = translations_with_sigma("u2", sampler)
    verdict = check_prolonged_involution(system(["u2", "0"], PLANE), sset, sampler)
    assert not verdict.ok


def test_construction_rejects_non_symmetric_base(sampler, linear_fields):
    sset = SymmetrySet.build(linear_fields, SigmaSpec.zero(2), sampler)
    base = system(["u1^2", "0", "0"])
    with pytest.raises(NotStandardSymmetry):
        construct_sigma_symmetric(base, sset, parse_many(["u1", "u3"], LINEAR), sampler)


def test_construction_needs_one_mu_per_field(sampler, linear_fields, linear_system):
    sset = SymmetrySet.build(linear_fields, SigmaSpec.zero(2), sampler)
    with pytest.raises(DimensionMismatch):
        construct_sigma_symmetric(linear_system, sset, [ONE], sampler)


def test_wrong_sigma_fails_determining_equations(sampler):
    ds = system(["u1"], ParseContext(1))
    sset = SymmetrySet.build([field(["1"], ParseContext(1))], SigmaSpec.scalar(ONE), sampler)
    assert check_ds_sigma_symmetry(ds, sset, sampler).ok
    wrong = SymmetrySet.build([field(["1"], ParseContext(1))], SigmaSpec.zero(1), sampler)
    report = check_ds_sigma_symmetry(ds, wrong, sampler)
    assert not report.ok
    assert [entry.label for entry in report.failures()] == ["X1.u1"]


def test_dynamical_systems_need_vertical_fields(sampler):
    ds = system(["u1"], ParseContext(1))
    moving = VectorField(ONE, (parse("u1", ParseContext(1)),))
    sset = SymmetrySet.build([moving], SigmaSpec.zero(1), sampler)
    with pytest.raises(VerticalFieldRequired):
        check_ds_sigma_symmetry(ds, sset, sampler)


def test_lambda_symmetry_of_second_order_equation(sampler):
    context = ParseContext(1)
    ode = OdeSystem.from_solved((2,), (parse("u1'^2", context),))
    translation = [field(["1"], context)]
    lam = parse("u1'", context)
    lambda_set = SymmetrySet.build(translation, SigmaSpec.scalar(lam), sampler)
    assert check_ode_sigma_symmetry(ode, lambda_set, sampler).ok
    standard = SymmetrySet.build(translation, SigmaSpec.zero(1), sampler)
    assert check_ode_sigma_symmetry(ode, standard, sampler).ok
    constant = SymmetrySet.build(translation, SigmaSpec.scalar(ONE), sampler)
    assert not check_ode_sigma_symmetry(ode, constant, sampler).ok


def test_orbital_scaling(sampler):
    ds = system(["u1^2", "u2^2"], PLANE)
    scaling = [field(["u1", "u2"], PLANE)]
    rho = parse("u1", PLANE)
    scaled = scale_to_orbital(ds, rho, sampler)
    spec = orbital_spec(scaling, SigmaSpec(((ZERO,),), theta=(ONE,)), rho)
    assert spec.orbital
    assert sampler.is_zero(sub(spec.theta[0], 2)).ok
    assert check_ds_sigma_symmetry(scaled, SymmetrySet.build(scaling, spec, sampler), sampler).ok


def test_zero_scaling_is_rejected(sampler):
    with pytest.raises(ZeroScaling):
        scale_to_orbital(system(["u1"], ParseContext(1)), ZERO, sampler)


@pytest.mark.parametrize(
    "equations, phi, label",
    [
        (["-u2", "u1"], ["u1", "u2"], "standard"),
        (["u1^2", "u2^2"], ["u1", "u2"], "orbital"),
    ],
)
def test_classification_in_the_plane(sampler, equations, phi, label):
    assert classify_symmetry(system(equations, PLANE), [field(phi, PLANE)], sampler).label == label


def test_classification_lambda(sampler):
    context = ParseContext(1)
    result = classify_symmetry(system(["u1"], context), [field(["1"], context)], sampler)
    assert result.label == "lambda"
    assert result.standard_residual > 0.5
