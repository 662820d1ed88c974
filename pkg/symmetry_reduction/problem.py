"""Problem files: TOML sections describing one system, its symmetries and what to expect."""

import copy
import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import toml

from .exceptions import ProblemFileError, SymmetryReductionError
from .expr import ZERO, Expr, sub
from .jet import Matrix, SigmaSpec, VectorField
from .parser import ParseContext, alias_map, default_names, parse_definitions, parse_value
from .systems import DynSystem, OdeSystem

logger = logging.getLogger(__name__)

SECTIONS = (
    "problem",
    "system",
    "definitions",
    "instantiations",
    "symmetries",
    "sigma",
    "construction",
    "invariants",
    "reduction",
    "conversion",
    "sampling",
    "integration",
    "classification",
)


@dataclass
class ConstructionSpec:
    """Build the symmetric system from a standardly symmetric base."""

    base: DynSystem
    mu: Tuple[Expr, ...] = ()
    rho: Optional[Expr] = None
    expected: Tuple[Expr, ...] = ()


@dataclass
class InvariantSpec:
    w: Tuple[Expr, ...] = ()
    eta: Tuple[Expr, ...] = ()
    w_names: Tuple[str, ...] = ()
    eta_names: Tuple[str, ...] = ()
    search: bool = False
    degree: int = 3
    rational: bool = True
    augmented: bool = False
    constants: Tuple[Expr, ...] = ()
    find_constants: bool = False
    complement: Optional[Expr] = None


@dataclass
class RatioSpec:
    numerator: int
    denominator: int
    psi: Expr


@dataclass
class ReductionSpec:
    kind: str = "ds"
    expected: Tuple[Expr, ...] = ()
    ratios: Tuple[RatioSpec, ...] = ()
    reconstruction: Tuple[Expr, ...] = ()
    algebraic: Tuple[Expr, ...] = ()
    max_degree: int = 4


@dataclass
class RelationSpec:
    name: str
    source: Expr
    expected: Optional[Expr] = None
    constant: bool = False


@dataclass
class SolutionSpec:
    """Closed-form y(t) expected to satisfy the derived ODE."""

    expr: Expr
    t_span: Tuple[float, float] = (0.0, 1.0)
    points: int = 100


@dataclass
class ConversionSpec:
    pivot: int = 1
    time_index: Optional[int] = None
    name: str = "y"
    expected: Optional[Expr] = None
    relations: Tuple[RelationSpec, ...] = ()
    solutions: Tuple[SolutionSpec, ...] = ()


@dataclass
class SamplingSpec:
    seed: Optional[int] = None
    low: float = 0.5
    high: float = 1.5
    exclude: Tuple[Expr, ...] = ()
    trials: Optional[int] = None
    tol: Optional[float] = None


@dataclass
class IntegrationSpec:
    t_span: Tuple[float, float] = (0.0, 1.0)
    step: float = 1e-4
    count: int = 5
    initial: Tuple[Tuple[float, ...], ...] = ()
    low: float = 0.5
    high: float = 1.5
    parameters: Dict[str, float] = field(default_factory=dict)


@dataclass
class ClassificationSpec:
    expected: Optional[str] = None
    shape: Optional[str] = None


@dataclass
class Problem:
    name: str
    path: Optional[Path]
    digest: str
    kind: str
    n: int
    parameters: Tuple[str, ...]
    names: Tuple[str, ...]
    tags: Tuple[str, ...] = ()
    description: str = ""
    instantiation: str = ""
    definitions: Dict[str, Expr] = field(default_factory=dict)
    system: Optional[Union[DynSystem, OdeSystem]] = None
    fields: Tuple[VectorField, ...] = ()
    spec: Optional[SigmaSpec] = None
    construction: Optional[ConstructionSpec] = None
    invariants: InvariantSpec = field(default_factory=InvariantSpec)
    reduction: Optional[ReductionSpec] = None
    conversion: Optional[ConversionSpec] = None
    sampling: SamplingSpec = field(default_factory=SamplingSpec)
    integration: Optional[IntegrationSpec] = None
    classification: Optional[ClassificationSpec] = None

    @property
    def tag(self) -> str:
        return f"{self.name}[{self.instantiation}]" if self.instantiation else self.name


class _Reader:
    """Parses the sections of one instantiation, reporting failures with file and key."""

    def __init__(self, data: Mapping[str, Any], path: Optional[Path]):
        self.data = data
        self.path = path

    def error(self, message: str, key: str) -> ProblemFileError:
        return ProblemFileError(message, self.path, key)

    def section(self, name: str) -> Dict[str, Any]:
        value = self.data.get(name, {})
        if not isinstance(value, dict):
            raise self.error("expected a table", name)
        return value

    def expr(self, value: Any, context: ParseContext, key: str) -> Expr:
        try:
            return parse_value(value, context)
        except SymmetryReductionError as e:
            raise self.error(str(e), key) from e

    def exprs(
        self, values: Any, context: ParseContext, key: str, length: Optional[int] = None
    ) -> Tuple[Expr, ...]:
        if isinstance(values, (str, int, float)):
            values = [values]
        if not isinstance(values, (list, tuple)):
            raise self.error("expected a list of expressions", key)
        if length is not None and len(values) != length:
            raise self.error(f"expected {length} entries, found {len(values)}", key)
        return tuple(self.expr(v, context, f"{key}[{i}]") for i, v in enumerate(values))

    def matrix(self, rows: Any, context: ParseContext, key: str, shape: Tuple[int, int]) -> Matrix:
        height, width = shape
        if not isinstance(rows, list) or len(rows) != height:
            raise self.error(f"expected {height} rows", key)
        return tuple(self.exprs(row, context, f"{key}[{i}]", width) for i, row in enumerate(rows))

    def equation(self, text: Any, context: ParseContext, key: str) -> Expr:
        if not isinstance(text, str) or text.count("=") != 1:
            raise self.error("ODE equations are written 'lhs = rhs'", key)
        lhs, rhs = text.split("=")
        return sub(self.expr(lhs, context, key), self.expr(rhs, context, key))


def _merge(base: Dict[str, Any], override: Mapping[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for section, values in override.items():
        if section == "name":
            continue
        if isinstance(values, dict) and isinstance(merged.get(section), dict):
            merged[section].update(values)
        else:
            merged[section] = values
    return merged


def _build(data: Dict[str, Any], path: Optional[Path], digest: str, instantiation: str) -> Problem:
    reader = _Reader(data, path)
    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise reader.error(f"unknown sections {', '.join(sorted(unknown))}", "file")

    meta = reader.section("problem")
    system = reader.section("system")
    kind = system.get("kind", "ds")
    if kind not in ("ds", "ode"):
        raise reader.error(f"kind must be ds or ode, not {kind!r}", "system.kind")
    try:
        n = int(system["n"])
    except (KeyError, TypeError, ValueError) as e:
        raise reader.error("dimension n is required", "system.n") from e
    parameters = tuple(system.get("parameters", ()))
    names = tuple(system.get("names", ()))
    if names and len(names) != n:
        raise reader.error(f"{len(names)} names for n={n}", "system.names")

    context = ParseContext(n, parameters=parameters)
    if names:
        context = context.with_aliases(alias_map(names))
    try:
        definitions = parse_definitions(reader.section("definitions"), context)
    except SymmetryReductionError as e:
        raise reader.error(str(e), "definitions") from e
    context = context.with_definitions(definitions)

    problem = Problem(
        name=meta.get("name", path.stem if path else "problem"),
        path=path,
        digest=digest,
        kind=kind,
        n=n,
        parameters=parameters,
        names=names,
        tags=tuple(meta.get("tags", ())),
        description=meta.get("description", ""),
        instantiation=instantiation,
        definitions=definitions,
    )

    if "equations" in system:
        if kind == "ds":
            rhs = reader.exprs(system["equations"], context, "system.equations", n)
            problem.system = DynSystem(rhs, parameters, names, problem.name)
        else:
            equations = [
                reader.equation(text, context, f"system.equations[{i}]")
                for i, text in enumerate(system["equations"])
            ]
            try:
                problem.system = OdeSystem.from_equations(
                    equations, parameters, names, problem.name
                )
            except SymmetryReductionError as e:
                raise reader.error(str(e), "system.equations") from e

    symmetries = reader.section("symmetries")
    if symmetries:
        phi = symmetries.get("phi")
        if not isinstance(phi, list) or not phi:
            raise reader.error("phi must list one row per field", "symmetries.phi")
        s = len(phi)
        rows = reader.matrix(phi, context, "symmetries.phi", (s, n))
        tau = reader.exprs(symmetries.get("tau", ["0"] * s), context, "symmetries.tau", s)
        problem.fields = tuple(
            VectorField(t, row, name=f"X{alpha}")
            for alpha, (t, row) in enumerate(zip(tau, rows), start=1)
        )
        problem.spec = _sigma(reader, context, s)

    construction = reader.section("construction")
    if construction:
        base = reader.exprs(construction.get("base", ()), context, "construction.base", n)
        rho = construction.get("rho")
        problem.construction = ConstructionSpec(
            base=DynSystem(base, parameters, names, f"{problem.name}-base"),
            mu=reader.exprs(construction.get("mu", ()), context, "construction.mu"),
            rho=reader.expr(rho, context, "construction.rho") if rho is not None else None,
            expected=reader.exprs(
                construction.get("expected", ()), context, "construction.expected"
            ),
        )

    problem.invariants = _invariants(reader, context)
    problem.reduction = _reduction(reader, problem.invariants, parameters)
    problem.conversion = _conversion(reader, context, parameters)
    problem.sampling = _sampling(reader, context)
    problem.integration = _integration(reader)
    classification = reader.section("classification")
    if classification:
        problem.classification = ClassificationSpec(
            classification.get("expected"), classification.get("shape")
        )
    return problem


def _sigma(reader: _Reader, context: ParseContext, s: int) -> SigmaSpec:
    sigma = reader.section("sigma")
    if "lambda" in sigma:
        if s != 1:
            raise reader.error("lambda needs exactly one field", "sigma.lambda")
        matrix: Matrix = ((reader.expr(sigma["lambda"], context, "sigma.lambda"),),)
    elif "matrix" in sigma:
        matrix = reader.matrix(sigma["matrix"], context, "sigma.matrix", (s, s))
    else:
        matrix = tuple(tuple(ZERO for _ in range(s)) for _ in range(s))
    theta = reader.exprs(sigma["theta"], context, "sigma.theta", s) if "theta" in sigma else None
    nu = None
    if "nu" in sigma:
        raw = sigma["nu"]
        if not isinstance(raw, list) or len(raw) != s:
            raise reader.error(f"nu needs {s} blocks", "sigma.nu")
        nu = tuple(
            reader.matrix(block, context, f"sigma.nu[{i}]", (s, s)) for i, block in enumerate(raw)
        )
    try:
        return SigmaSpec(matrix, theta, nu)
    except SymmetryReductionError as e:
        raise reader.error(str(e), "sigma") from e


def _invariants(reader: _Reader, context: ParseContext) -> InvariantSpec:
    section = reader.section("invariants")
    w = reader.exprs(section.get("w", ()), context, "invariants.w")
    eta = reader.exprs(section.get("eta", ()), context, "invariants.eta")
    complement = section.get("complement")
    eta_names = tuple(section.get("eta_names", ()))
    if eta and not eta_names:
        eta_names = default_names(len(eta), "eta")
    return InvariantSpec(
        w=w,
        eta=eta,
        w_names=tuple(section.get("w_names", ())) or default_names(len(w), "w"),
        eta_names=eta_names,
        search=bool(section.get("search", False)),
        degree=int(section.get("degree", 3)),
        rational=bool(section.get("rational", True)),
        augmented=bool(section.get("augmented", False)),
        constants=reader.exprs(section.get("constants", ()), context, "invariants.constants"),
        find_constants=bool(section.get("find_constants", False)),
        complement=(
            reader.expr(complement, context, "invariants.complement") if complement else None
        ),
    )


def _reduction(
    reader: _Reader, invariants: InvariantSpec, parameters: Sequence[str]
) -> Optional[ReductionSpec]:
    section = reader.section("reduction")
    if not section:
        return None
    kind = section.get("kind", "ds")
    if kind not in ("ds", "ode", "orbital"):
        raise reader.error(f"unknown reduction kind {kind!r}", "reduction.kind")
    if kind == "ode":
        names = tuple(section.get("names", ())) or invariants.eta_names + invariants.w_names
    else:
        names = invariants.w_names
    reduced = ParseContext(max(len(names), 1), parameters=tuple(parameters))
    reduced = reduced.with_aliases(alias_map(names))
    ratios = []
    for i, entry in enumerate(section.get("ratios", ())):
        key = f"reduction.ratios[{i}]"
        try:
            numerator, denominator = int(entry["numerator"]), int(entry["denominator"])
            psi = entry["psi"]
        except (KeyError, TypeError, ValueError) as e:
            raise reader.error("ratio entries need numerator, denominator and psi", key) from e
        ratios.append(RatioSpec(numerator, denominator, reader.expr(psi, reduced, key)))
    return ReductionSpec(
        kind=kind,
        expected=reader.exprs(section.get("expected", ()), reduced, "reduction.expected"),
        ratios=tuple(ratios),
        reconstruction=reader.exprs(
            section.get("reconstruction", ()), reduced, "reduction.reconstruction"
        ),
        algebraic=reader.exprs(section.get("algebraic", ()), reduced, "reduction.algebraic"),
        max_degree=int(section.get("max_degree", 4)),
    )


def _conversion(
    reader: _Reader, context: ParseContext, parameters: Sequence[str]
) -> Optional[ConversionSpec]:
    section = reader.section("conversion")
    if not section:
        return None
    name = section.get("name", "y")
    jets = ParseContext(1, parameters=tuple(parameters)).with_aliases(alias_map([name]))
    relations = []
    for i, entry in enumerate(section.get("relations", ())):
        key = f"conversion.relations[{i}]"
        if "source" not in entry:
            raise reader.error("relation needs a source", key)
        relations.append(
            RelationSpec(
                entry.get("name", f"r{i + 1}"),
                reader.expr(entry["source"], context, key),
                reader.expr(entry["expected"], jets, key) if "expected" in entry else None,
                bool(entry.get("constant", False)),
            )
        )
    solutions = []
    for i, entry in enumerate(section.get("solutions", ())):
        key = f"conversion.solutions[{i}]"
        span = entry.get("t_span", [0.0, 1.0])
        expr = reader.expr(entry["expr"], jets, key)
        points = int(entry.get("points", 100))
        solutions.append(SolutionSpec(expr, (float(span[0]), float(span[1])), points))
    time_index = section.get("time_index")
    expected = section.get("expected")
    return ConversionSpec(
        pivot=int(section.get("pivot", 1)),
        time_index=int(time_index) if time_index is not None else None,
        name=name,
        expected=(
            reader.expr(expected, jets, "conversion.expected") if expected is not None else None
        ),
        relations=tuple(relations),
        solutions=tuple(solutions),
    )


def _sampling(reader: _Reader, context: ParseContext) -> SamplingSpec:
    section = reader.section("sampling")
    return SamplingSpec(
        seed=section.get("seed"),
        low=float(section.get("low", 0.5)),
        high=float(section.get("high", 1.5)),
        exclude=reader.exprs(section.get("exclude", ()), context, "sampling.exclude"),
        trials=section.get("trials"),
        tol=section.get("tol"),
    )


def _integration(reader: _Reader) -> Optional[IntegrationSpec]:
    section = reader.section("integration")
    if not section:
        return None
    span = section.get("t_span", [0.0, 1.0])
    return IntegrationSpec(
        t_span=(float(span[0]), float(span[1])),
        step=float(section.get("step", 1e-4)),
        count=int(section.get("count", 5)),
        initial=tuple(tuple(float(x) for x in row) for row in section.get("initial", ())),
        low=float(section.get("low", 0.5)),
        high=float(section.get("high", 1.5)),
        parameters={k: float(v) for k, v in section.get("parameters", {}).items()},
    )


def loads_problems(text: str, path: Optional[Path] = None) -> List[Problem]:
    """One Problem for the base file and one per [[instantiations]] entry."""
    try:
        data = toml.loads(text)
    except toml.TomlDecodeError as e:
        raise ProblemFileError(f"invalid TOML: {e}", path) from e
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    instantiations = data.pop("instantiations", [])
    if not isinstance(instantiations, list):
        raise ProblemFileError("instantiations must be an array of tables", path, "instantiations")
    if not instantiations:
        return [_build(data, path, digest, "")]
    problems = []
    for i, override in enumerate(instantiations):
        label = override.get("name", f"case{i + 1}")
        problems.append(_build(_merge(data, override), path, digest, label))
    logger.debug("loaded %d instantiations from %s", len(problems), path)
    return problems


def load_problems(path: Union[str, Path]) -> List[Problem]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ProblemFileError(f"cannot read: {e.strerror}", path) from e
    return loads_problems(text, path)


def load_problem(path: Union[str, Path]) -> Problem:
    return load_problems(path)[0]
