"""Tests for problem-file loading."""

import numpy as np
import pytest

from symmetry_reduction.exceptions import ProblemFileError
from symmetry_reduction.expr import dependent, evaluate, jet, parameter
from symmetry_reduction.integrate import initial_conditions, integrate
from symmetry_reduction.pipeline import corpus_files
from symmetry_reduction.problem import load_problem, load_problems, loads_problems
from symmetry_reduction.sampling import make_rng
from symmetry_reduction.systems import DynSystem, OdeSystem

MINIMAL = """
[problem]
name = "scaling"
tags = ["demo"]

[system]
kind = "ds"
n = 2
names = ["x", "y"]
parameters = ["k"]
equations = ["x + r", "k*y"]

[definitions]
r = "x*y"
s = "2*r"

[symmetries]
phi = [["x", "-y"]]

[sigma]
lambda = "s"

[invariants]
w = ["r"]

[reduction]
expected = ["2*w + 2*w^2"]
"""


@pytest.mark.parametrize(
    "stem, count", [("example1", 3), ("example2", 2), ("example3", 1), ("example4", 5)]
)
def test_corpus_instantiations(corpus_dir, stem, count):
    problems = load_problems(corpus_dir / f"{stem}.toml")
    assert len(problems) == count
    assert len({p.digest for p in problems}) == 1
    assert all(p.name == stem for p in problems)


def test_every_corpus_file_loads(corpus_dir):
    files = corpus_files(corpus_dir)
    assert [f.stem for f in files] == [f"example{i}" for i in range(1, 10)]
    for path in files:
        assert load_problems(path)


@pytest.mark.parametrize(
    "stem, relations, solutions",
    [
        ("example5", 1, 2),
        ("example6", 2, 2),
        ("example7", 1, 0),
        ("example8", 3, 0),
        ("example9", 2, 0),
    ],
)
def test_corpus_conversion_tables_load(corpus_dir, stem, relations, solutions):
    (problem,) = load_problems(corpus_dir / f"{stem}.toml")
    conversion = problem.conversion
    assert conversion.expected is not None
    assert len(conversion.relations) == relations
    assert all(r.expected is not None for r in conversion.relations)
    assert len(conversion.solutions) == solutions


def test_corpus_integration_settings(corpus_dir):
    for path in corpus_files(corpus_dir):
        for problem in load_problems(path):
            spec = problem.integration
            if spec is None:
                continue
            assert spec.t_span == (0.0, 1.0), problem.tag
            assert spec.step == pytest.approx(1e-4), problem.tag
            assert (len(spec.initial) or spec.count) == 5, problem.tag


@pytest.mark.parametrize("stem", ["example2", "example3", "example5", "example6", "example9"])
def test_corpus_trajectories_stay_finite(corpus_dir, stem):
    for problem in load_problems(corpus_dir / f"{stem}.toml"):
        spec = problem.integration
        ds = problem.system
        if ds is None:
            ds = DynSystem(problem.construction.expected, problem.parameters)
        if spec.initial:
            u0 = np.array(spec.initial).T
        else:
            u0 = initial_conditions(ds.n, spec.count, make_rng(3), spec.low, spec.high)
        trajectory = integrate(ds, u0, spec.t_span, 1e-3, spec.parameters, check_step=False)
        assert np.all(np.isfinite(trajectory.states)), problem.tag


def test_corpus_expectations_load(corpus_dir):
    (scaling,) = load_problems(corpus_dir / "example5.toml")
    assert scaling.invariants.w
    assert scaling.reduction.expected
    assert scaling.integration.count == 5
    relations = load_problem(corpus_dir / "example6.toml").conversion.relations
    (kappa,) = [r for r in relations if r.constant]
    assert kappa.name == "kappa"


def test_system_only_problem():
    (problem,) = loads_problems('[system]\nn = 1\nequations = ["u1"]\n')
    assert problem.fields == ()
    assert problem.invariants.w == () and problem.invariants.constants == ()
    assert problem.sampling.exclude == ()
    assert problem.reduction is None and problem.conversion is None


def test_instantiation_overrides_merge_key_by_key(corpus_dir):
    linear, nonlinear, algebraic = load_problems(corpus_dir / "example1.toml")
    assert linear.tag == "example1[linear]"
    assert nonlinear.instantiation == "nonlinear"
    # only h1..h3 are overridden; w and eta1 come from the base file
    assert set(nonlinear.definitions) == set(linear.definitions)
    assert isinstance(algebraic.system, OdeSystem)
    assert algebraic.system.orders == (1, 2, 2)
    assert algebraic.reduction.algebraic


def test_minimal_problem():
    (problem,) = loads_problems(MINIMAL)
    assert problem.tag == "scaling"
    assert problem.tags == ("demo",)
    assert problem.names == ("x", "y")
    assert isinstance(problem.system, DynSystem)
    point = {dependent(1): 2.0, dependent(2): 3.0, parameter("k"): 0.5}
    assert evaluate(problem.system.f[0], point) == pytest.approx(8.0)
    assert evaluate(problem.system.f[1], point) == pytest.approx(1.5)
    (field,) = problem.fields
    assert field.name == "X1"
    assert evaluate(problem.spec.sigma[0][0], point) == pytest.approx(12.0)
    assert problem.reduction.kind == "ds"
    assert problem.invariants.w_names == ("w",)
    assert problem.sampling.seed is None
    assert problem.integration is None


def test_ode_problem_with_time_component():
    (problem,) = loads_problems(
        """
        [system]
        kind = "ode"
        n = 1
        equations = ["u1'' = -u1"]

        [symmetries]
        phi = [["0"]]
        tau = ["1"]
        """
    )
    assert problem.system.orders == (2,)
    assert evaluate(problem.system.solved[0], {dependent(1): 2.0, jet(1, 1): 0.0}) == -2.0
    assert evaluate(problem.fields[0].tau, {}) == 1.0


def test_conversion_section():
    (problem,) = loads_problems(
        """
        [system]
        n = 2
        equations = ["1", "u1*u2"]

        [conversion]
        pivot = 2
        time_index = 1
        name = "z"
        expected = "t*z"

        [[conversion.relations]]
        name = "p"
        source = "u1*u2"
        expected = "z'/z"
        constant = false

        [[conversion.solutions]]
        expr = "exp(t^2/2)"
        t_span = [0.0, 0.5]
        """
    )
    conversion = problem.conversion
    assert (conversion.pivot, conversion.time_index, conversion.name) == (2, 1, "z")
    (relation,) = conversion.relations
    assert relation.name == "p" and not relation.constant
    point = {dependent(1): 2.0, jet(1, 1): 3.0}
    assert evaluate(relation.expected, point) == pytest.approx(1.5)
    (solution,) = conversion.solutions
    assert solution.t_span == (0.0, 0.5)
    assert solution.points == 100


@pytest.mark.parametrize(
    "text, key",
    [
        ('[system]\nn = 1\nequations = ["u1"]\n[extra]\na = 1\n', "file"),
        ('[system]\nkind = "pde"\nn = 1\n', "system.kind"),
        ('[system]\nequations = ["u1"]\n', "system.n"),
        ('[system]\nn = 2\nequations = ["u1"]\n', "system.equations"),
        ('[system]\nn = 1\nnames = ["x", "y"]\n', "system.names"),
        ('[system]\nkind = "ode"\nn = 1\nequations = ["u1\'\' + u1"]\n', "system.equations[0]"),
        ('[system]\nn = 1\nequations = ["u1 +* 2"]\n', "system.equations[0]"),
        ('[system]\nn = 2\n[symmetries]\nphi = [["1"]]\n', "symmetries.phi[0]"),
        (
            '[system]\nn = 1\n[symmetries]\nphi = [["1"], ["u1"]]\n[sigma]\nlambda = "1"\n',
            "sigma.lambda",
        ),
        ('[system]\nn = 1\n[reduction]\nkind = "pde"\n', "reduction.kind"),
        ('[system]\nn = 1\n[reduction]\nratios = [{ numerator = 1 }]\n', "reduction.ratios[0]"),
        (
            '[system]\nn = 1\n[conversion]\nrelations = [{ name = "r" }]\n',
            "conversion.relations[0]",
        ),
    ],
)
def test_problem_errors_name_the_key(text, key):
    with pytest.raises(ProblemFileError) as excinfo:
        loads_problems(text)
    assert excinfo.value.key == key
    assert f"[{key}]" in str(excinfo.value)


def test_invalid_toml():
    with pytest.raises(ProblemFileError, match="invalid TOML"):
        loads_problems("[system\nn = 1")


def test_unreadable_file(tmp_path):
    missing = tmp_path / "missing.toml"
    with pytest.raises(ProblemFileError) as excinfo:
        load_problem(missing)
    assert excinfo.value.path == missing
