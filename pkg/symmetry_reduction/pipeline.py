"""Per-example pipeline and the corpus runner."""

import logging
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import humanize
import numpy as np

from .exceptions import NewtonDivergence, SymmetryReductionError
from .expr import TIME, Expr, Sym, diff, evaluate_batch, jet, render, sub, substitute
from .integrate import (
    constant_drift,
    evaluate_along,
    finite_max,
    initial_conditions,
    integrate,
    integrate_callable,
    ratio_consistency,
    trajectory_discrepancy,
)
from .jet import SigmaSpec, check_commutation_identity, check_invariance_by_differentiation
from .performance import ParallelProcessor, ResultsCache, report_key
from .problem import ConversionSpec, Problem, load_problems
from .reduction import (
    InvariantSet,
    ReductionResult,
    constants_of_motion,
    find_invariants_ansatz,
    reduce_ds,
    reduce_ode,
    reduce_orbital,
    reduction_shape,
    verify_invariants,
)
from .sampling import Sampler, SamplingBox, Tolerances, Verdict, ZeroVerdict
from .symmetry import (
    SymmetrySet,
    check_ds_sigma_symmetry,
    check_ode_sigma_symmetry,
    check_prolonged_involution,
    classify_symmetry,
    construct_sigma_symmetric,
    orbital_spec,
    scale_to_orbital,
)
from .systems import DynSystem, OdeSystem
from .transform import OdeConversion, ds_to_ode, ode_to_ds, same_solved_form, transfer_reduction

logger = logging.getLogger(__name__)

CORPUS_DIR = Path(__file__).parent / "corpus"
DEFAULT_SEED = 42

STAGES = (
    "construct",
    "symmetry",
    "determining",
    "classification",
    "invariants",
    "reduction",
    "constants",
    "conversion",
    "trajectories",
)

COMMUTATION_TESTS = 12

TRAJECTORY_TOL = 1e-5
RECONSTRUCTION_TOL = 1e-6
DRIFT_TOL = 1e-6
SOLUTION_TOL = 1e-8

STATUS = {Verdict.ZERO: "pass", Verdict.NONZERO: "fail", Verdict.INCONCLUSIVE: "inconclusive"}


@dataclass
class PipelineConfig:
    """Unset fields fall back to the problem file, then to built-in defaults."""

    seed: Optional[int] = None
    trials: Optional[int] = None
    tol: Optional[float] = None
    step: Optional[float] = None
    initial_count: Optional[int] = None
    n_jobs: int = 1
    cache: bool = False
    cache_dir: Path = field(default_factory=Path.cwd)
    stages: Tuple[str, ...] = STAGES


@dataclass
class CheckRecord:
    name: str
    status: str
    max_residual: float = 0.0
    witness: str = ""
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "pass"

    @classmethod
    def from_verdict(cls, name: str, verdict: ZeroVerdict, detail: str = "") -> "CheckRecord":
        witness = verdict.witness_text()
        return cls(name, STATUS[verdict.status], verdict.max_residual, witness, detail)

    @classmethod
    def bound(cls, name: str, value: float, limit: float, detail: str = "") -> "CheckRecord":
        ok = bool(np.isfinite(value)) and value < limit
        return cls(name, "pass" if ok else "fail", float(value), "", detail or f"limit {limit:g}")

    @classmethod
    def equality(cls, name: str, ok: bool, detail: str) -> "CheckRecord":
        return cls(name, "pass" if ok else "fail", 0.0, "", detail)


@dataclass
class ExampleReport:
    name: str
    instantiation: str
    tags: Tuple[str, ...]
    seed: int
    tolerances: Dict[str, float]
    checks: List[CheckRecord] = field(default_factory=list)
    outputs: List[Tuple[str, str]] = field(default_factory=list)
    stats: List[Tuple[str, float]] = field(default_factory=list)

    @property
    def tag(self) -> str:
        return f"{self.name}[{self.instantiation}]" if self.instantiation else self.name

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def status(self) -> str:
        return "pass" if self.ok else "fail"

    @property
    def errored(self) -> bool:
        return any(c.status == "error" for c in self.checks)

    def add(self, record: CheckRecord) -> None:
        log = logger.debug if record.ok else logger.info
        log("%s: %s %s", self.tag, record.name, record.status)
        self.checks.append(record)

    def output(self, key: str, value: str) -> None:
        self.outputs.append((key, value))

    def stat(self, key: str, value: float) -> None:
        self.stats.append((key, float(value)))

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["status"] = self.status
        return data


def make_sampler(problem: Problem, config: PipelineConfig) -> Sampler:
    defaults = Tolerances()
    tol = config.tol if config.tol is not None else problem.sampling.tol
    trials = config.trials if config.trials is not None else problem.sampling.trials
    seed = config.seed if config.seed is not None else problem.sampling.seed
    tolerances = Tolerances(
        eps_zero=tol if tol is not None else defaults.eps_zero,
        trials=int(trials) if trials is not None else defaults.trials,
        low=problem.sampling.low,
        high=problem.sampling.high,
    )
    box = SamplingBox(
        low=problem.sampling.low,
        high=problem.sampling.high,
        exclusions=problem.sampling.exclude,
        margin=tolerances.exclusion_margin,
    )
    return Sampler(tolerances, box, int(seed) if seed is not None else DEFAULT_SEED)


class ExampleRun:
    """State shared by the stages of one example; failures become error checks."""

    def __init__(self, problem: Problem, config: PipelineConfig):
        self.problem = problem
        self.config = config
        self.sampler = make_sampler(problem, config)
        tolerances = self.sampler.tolerances
        self.report = ExampleReport(
            problem.name,
            problem.instantiation,
            problem.tags,
            self.sampler.seed,
            {
                "eps_zero": tolerances.eps_zero,
                "eps_pole": tolerances.eps_pole,
                "trials": float(tolerances.trials),
            },
        )
        self.system: Optional[Union[DynSystem, OdeSystem]] = problem.system
        self.spec: Optional[SigmaSpec] = problem.spec
        self.sset: Optional[SymmetrySet] = None
        self.invariants: Optional[InvariantSet] = None
        self.reduction: Optional[ReductionResult] = None
        self.constants: List[Expr] = []
        self.conversion: Optional[OdeConversion] = None

    @property
    def ds(self) -> Optional[DynSystem]:
        return self.system if isinstance(self.system, DynSystem) else None

    def wants(self, stage: str) -> bool:
        return stage in self.config.stages

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        try:
            yield
        except SymmetryReductionError as e:
            logger.warning("%s: %s failed: %s", self.report.tag, name, e)
            self.report.add(CheckRecord(name, "error", detail=f"{type(e).__name__}: {e}"))
        except (ValueError, KeyError, ArithmeticError, np.linalg.LinAlgError) as e:
            logger.warning("%s: %s raised %s", self.report.tag, name, e)
            self.report.add(CheckRecord(name, "error", detail=f"{type(e).__name__}: {e}"))

    def same(self, name: str, pairs: Sequence[Tuple[Expr, Expr]], detail: str = "") -> None:
        verdict = self.sampler.all_zero([sub(a, b) for a, b in pairs], name)
        self.report.add(CheckRecord.from_verdict(name, verdict, detail))

    # -- stages -------------------------------------------------------------------------

    def construct(self) -> None:
        spec = self.problem.construction
        if spec is None:
            return
        fields = self.problem.fields
        base_set = SymmetrySet.build(fields, SigmaSpec.zero(len(fields)), self.sampler)
        ds = spec.base
        sigma = SigmaSpec.zero(len(fields))
        if spec.mu:
            built = construct_sigma_symmetric(ds, base_set, spec.mu, self.sampler)
            self.report.add(CheckRecord.from_verdict("construction", built.report.verdict))
            ds, sigma = built.ds, built.spec
        if spec.rho is not None:
            ds = scale_to_orbital(ds, spec.rho, self.sampler)
            sigma = orbital_spec(fields, sigma, spec.rho)
        self.system = DynSystem(ds.f, ds.parameters, ds.names, self.problem.name)
        self.spec = sigma
        for a, fa in enumerate(ds.f, start=1):
            self.report.output(f"constructed.f{a}", render(fa))
        if spec.expected:
            self.same("construction-expected", list(zip(ds.f, spec.expected)))

    def symmetry(self) -> None:
        if not self.problem.fields or self.spec is None:
            return
        self.sset = SymmetrySet.build(self.problem.fields, self.spec, self.sampler)
        self.report.output("rank", str(self.sset.rank))
        self.report.add(
            CheckRecord.equality("involution", self.sset.involution_verified, f"s={self.sset.s}")
        )
        antisymmetry = self.sset.spec.check_antisymmetry(self.sampler)
        self.report.add(CheckRecord.from_verdict("nu-antisymmetry", antisymmetry))
        commutation = check_commutation_identity(
            self.sset.fields,
            self.sset.spec,
            1,
            self.sampler,
            COMMUTATION_TESTS,
            self.sampler.tolerances.q_max,
        )
        self.report.add(CheckRecord.from_verdict("commutation-identity", commutation))

    def determining(self) -> None:
        if self.sset is None or self.system is None:
            return
        if isinstance(self.system, DynSystem):
            report = check_ds_sigma_symmetry(self.system, self.sset, self.sampler)
        else:
            report = check_ode_sigma_symmetry(self.system, self.sset, self.sampler)
        detail = ", ".join(e.label for e in report.failures())
        self.report.add(CheckRecord.from_verdict("determining-equations", report.verdict, detail))
        sset = self.sset
        if report.ok and self.ds is not None and sset.s > 1 and not sset.spec.orbital:
            prolonged = check_prolonged_involution(self.ds, sset, self.sampler)
            self.report.add(CheckRecord.from_verdict("prolonged-involution", prolonged))

    def classification(self) -> None:
        spec = self.problem.classification
        if spec is None or self.ds is None:
            return
        found = classify_symmetry(self.ds, self.problem.fields, self.sampler)
        self.report.output("classification", found.label)
        if spec.expected:
            matches = found.label == spec.expected
            self.report.add(CheckRecord.equality("classification", matches, found.label))
        inv = self.problem.invariants
        if spec.shape and inv.w and inv.complement is not None:
            declared = InvariantSet(inv.w, (), "user", inv.w_names)
            shape = reduction_shape(self.ds, declared, inv.complement, self.sampler)
            self.report.output("shape", shape)
            self.report.add(CheckRecord.equality("reduction-shape", shape == spec.shape, shape))

    def invariants_stage(self) -> None:
        spec = self.problem.invariants
        if self.sset is None:
            return
        if spec.search:
            with_eta = bool(spec.eta) or self.problem.kind == "ode"
            found = find_invariants_ansatz(
                self.sset,
                self.sampler,
                spec.degree,
                spec.rational,
                spec.augmented,
                with_eta=with_eta,
            )
            for name, e in zip(found.w_names, found.w):
                self.report.output(f"ansatz.{name}", render(e))
            for name, e in zip(found.eta_names, found.eta):
                self.report.output(f"ansatz.{name}", render(e))
            counts = f"{len(found.w)} w, {len(found.eta)} eta"
            self.report.add(CheckRecord.equality("ansatz", True, counts))
            self.invariants = found
        if spec.w:
            candidate = InvariantSet(spec.w, spec.eta, "user", spec.w_names, spec.eta_names)
            checked = verify_invariants(self.sset, self.system, candidate, self.sampler)
            rank = f"rank {checked.rank}"
            self.report.add(CheckRecord.from_verdict("invariants", checked.verdict, rank))
            self.report.add(CheckRecord.equality("independence", checked.independent, rank))
            self.invariants = candidate
        verified = all(c.ok for c in self.report.checks if c.name == "invariants")
        if self.invariants is not None and verified:
            self._differentiated_invariants(self.invariants)

    def _differentiated_invariants(self, inv: InvariantSet) -> None:
        """D_t of one common invariant over D_t of another is again invariant one order up."""
        zetas = list(inv.w) + list(inv.eta)
        if len(zetas) < 2:
            if not all(f.is_vertical(self.sampler) for f in self.sset.fields):
                return
            zetas.append(Sym(TIME))
        k = 1 if inv.eta else 0
        verdict = check_invariance_by_differentiation(
            self.sset.fields,
            self.sset.spec,
            zetas[0],
            zetas[1],
            k,
            self.sampler,
            self.sampler.tolerances.q_max,
        )
        self.report.add(CheckRecord.from_verdict("invariance-by-differentiation", verdict))

    def reduction_stage(self) -> None:
        spec = self.problem.reduction
        if spec is None or self.sset is None or self.invariants is None:
            return
        sset, inv, sampler = self.sset, self.invariants, self.sampler
        if spec.kind == "ode":
            if not isinstance(self.system, OdeSystem):
                raise SymmetryReductionError("ODE reduction needs an ODE system")
            result = reduce_ode(self.system, sset, inv, sampler, min(spec.max_degree, 3))
        elif spec.kind == "orbital":
            result = reduce_orbital(self.ds, sset, inv, sampler, spec.max_degree)
        else:
            result = reduce_ds(self.ds, sset, inv, sampler, spec.max_degree)
        self.reduction = result
        self.report.output("reduction.kind", result.kind)
        for i, line in enumerate(result.equations(), start=1):
            self.report.output(f"reduced[{i}]", line)
        names = result.names
        for relation in result.reconstruction:
            self.report.output(f"reconstruction.{relation.name}", render(relation.expr, names))
        for relation in result.algebraic:
            self.report.output(f"algebraic.{relation.name}", render(relation.expr, names))
        if result.omega is not None:
            self.report.output("omega", render(result.omega))
        for key, value in result.ratio_strings():
            self.report.output(f"ratio.{key}", value)

        if spec.expected and result.reduced is not None:
            reduced = result.reduced
            rhs = reduced.f if isinstance(reduced, DynSystem) else reduced.require_solved()
            if len(rhs) != len(spec.expected):
                count = f"{len(rhs)} equations"
                self.report.add(CheckRecord.equality("reduced-expected", False, count))
            else:
                self.same("reduced-expected", list(zip(rhs, spec.expected)))
        for ratio in spec.ratios:
            pair = (ratio.numerator, ratio.denominator)
            name = f"ratio-{ratio.numerator}-{ratio.denominator}"
            match = [r for r in result.ratios if (r.numerator, r.denominator) == pair]
            if not match:
                self.report.add(CheckRecord.equality(name, False, "missing"))
                continue
            self.same(name, [(match[0].psi, ratio.psi)])
        if spec.reconstruction:
            found = [r.expr for r in result.reconstruction]
            self.same("reconstruction-expected", list(zip(found, spec.reconstruction)))
        if spec.algebraic:
            found = [r.expr for r in result.algebraic]
            self.same("algebraic-expected", list(zip(found, spec.algebraic)))

    def constants_stage(self) -> None:
        spec = self.problem.invariants
        if self.sset is None or self.ds is None:
            return
        fields = [self.ds.dynamical_field()] + list(self.sset.fields)
        for i, c in enumerate(spec.constants, start=1):
            verdict = self.sampler.all_zero([x.base().apply(c) for x in fields], f"constant{i}")
            self.report.add(CheckRecord.from_verdict(f"constant-{i}", verdict))
            self.constants.append(c)
        if spec.find_constants:
            found = constants_of_motion(
                self.ds, self.sset, self.sampler, spec.degree, spec.rational
            )
            self.report.output("constants.count", str(len(found)))
            for i, c in enumerate(found, start=1):
                self.report.output(f"constants.c{i}", render(c))
            self.constants.extend(found)
            if self.reduction is not None:
                self.reduction.constants = list(found)

    def conversion_stage(self) -> None:
        spec = self.problem.conversion
        if spec is None:
            return
        if isinstance(self.system, OdeSystem):
            self._ode_round_trip()
            return
        if self.ds is None:
            return
        conv = ds_to_ode(self.ds, self.sampler, spec.pivot, spec.time_index, spec.name)
        integration = self.problem.integration
        conv.parameter_values = dict(integration.parameters) if integration else {}
        self.conversion = conv
        self.report.output("conversion.symbolic", str(conv.symbolic).lower())
        if conv.ode is None:
            self._implicit_checks(conv, spec)
            return
        names = conv.ode.display_names()
        self.report.output("ode", conv.ode.render_equations()[0])
        (top,) = conv.ode.require_solved()
        if spec.expected is not None:
            self.same("ode-expected", [(top, spec.expected)])
        _, back = self._through_companion(conv.ode, spec.name)
        if back.ode is not None:
            verdict = same_solved_form(back.ode, conv.ode, self.sampler)
            self.report.add(CheckRecord.from_verdict("round-trip", verdict))
        known = set(self.reduction.invariants.w_names) if self.reduction is not None else set()
        extra = [(r.name, r.source) for r in spec.relations if r.name not in known]
        transferred = transfer_reduction(conv, self.reduction, self.sampler, extra)
        expected = {r.name: r.expected for r in spec.relations if r.expected is not None}
        for relation in transferred:
            self.report.output(f"transfer.{relation.name}", relation.render(names))
            if relation.name in expected and relation.expr is not None:
                self.same(f"transfer-{relation.name}", [(relation.expr, expected[relation.name])])
        for i, solution in enumerate(spec.solutions, start=1):
            self.report.stat(f"solution{i}.residual", self._solution_residual(conv.ode, solution))
            self.report.add(
                CheckRecord.bound(f"solution-{i}", self.report.stats[-1][1], SOLUTION_TOL)
            )

    def _implicit_checks(self, conv: OdeConversion, spec: ConversionSpec) -> None:
        """Expected ODE and relations compared through the chain map, without an inverse."""
        if spec.expected is None:
            record = CheckRecord("ode-derivation", "inconclusive", detail="numeric inversion only")
            self.report.add(record)
        else:
            residual = sub(conv.from_jets(spec.expected), conv.chain[conv.order])
            verdict = self.sampler.is_zero(residual, "ode-expected")
            self.report.add(CheckRecord.from_verdict("ode-expected", verdict))
        for relation in spec.relations:
            if relation.expected is None:
                continue
            residual = sub(conv.from_jets(relation.expected), conv.to_working(relation.source))
            verdict = self.sampler.is_zero(residual, f"transfer:{relation.name}")
            self.report.add(CheckRecord.from_verdict(f"transfer-{relation.name}", verdict))
        for i, _ in enumerate(spec.solutions, start=1):
            record = CheckRecord(f"solution-{i}", "inconclusive", detail="no symbolic ODE")
            self.report.add(record)

    def _ode_round_trip(self) -> None:
        ode = self.system
        if ode.n != 1 or ode.solved is None:
            return
        companion, back = self._through_companion(ode, self.problem.conversion.name)
        if back.ode is None:
            record = CheckRecord("round-trip", "inconclusive", detail="numeric inversion only")
            self.report.add(record)
            return
        self.report.output("companion", "; ".join(companion.render_equations()))
        verdict = same_solved_form(back.ode, ode, self.sampler)
        self.report.add(CheckRecord.from_verdict("round-trip", verdict))

    def _through_companion(self, ode: OdeSystem, name: str) -> Tuple[DynSystem, OdeConversion]:
        """Companion system of a scalar ODE and the ODE derived back from it."""
        companion = ode_to_ds(ode)
        if companion.n > ode.orders[0]:
            return companion, ds_to_ode(companion, self.sampler, 2, 1, name)
        return companion, ds_to_ode(companion, self.sampler, 1, None, name)

    @staticmethod
    def _solution_residual(ode: OdeSystem, solution) -> float:
        m = ode.orders[0]
        derivatives = [solution.expr]
        for _ in range(m):
            derivatives.append(diff(derivatives[-1], TIME))
        (rhs,) = ode.require_solved()
        along = substitute(rhs, {jet(1, k): derivatives[k] for k in range(m)})
        residual = sub(derivatives[m], along)
        grid = np.linspace(solution.t_span[0], solution.t_span[1], solution.points)
        values = evaluate_batch(residual, {TIME: grid})
        scale = np.maximum(1.0, np.abs(evaluate_batch(derivatives[m], {TIME: grid})))
        return finite_max(np.abs(values) / scale, "solution residual")

    def trajectories(self) -> None:
        spec = self.problem.integration
        ds = self.ds
        if spec is None or ds is None:
            return
        step = self.config.step or spec.step
        count = self.config.initial_count or spec.count
        if spec.initial:
            u0 = np.array(spec.initial, dtype=float).T
        else:
            u0 = initial_conditions(ds.n, count, self.sampler.rng("initial"), spec.low, spec.high)
        params = spec.parameters
        full = integrate(ds, u0, spec.t_span, step, params)
        result = self.reduction

        if result is not None and result.kind == "full" and isinstance(result.reduced, DynSystem):
            w = list(result.invariants.w)
            w0 = evaluate_along(w, full.start(), ds.n, params)[:, 0, :]
            reduced = integrate(result.reduced, w0, spec.t_span, step, params)
            gap = trajectory_discrepancy(full, w, reduced, ds.n, params)
            self.report.stat("trajectory.discrepancy", gap)
            self.report.add(CheckRecord.bound("trajectory-consistency", gap, TRAJECTORY_TOL))
            pairs = zip(result.reconstruction, result.invariants.eta)
            relations = [(r, e) for r, e in pairs if r.expressed]
            if relations:
                restricted = [ds.restrict(e) for _, e in relations]
                along_full = evaluate_along(restricted, full, ds.n, params)
                rebuilt = [r.expr for r, _ in relations]
                along_reduced = evaluate_along(rebuilt, reduced, len(w), params)
                gap = float(np.max(np.abs(along_full - along_reduced)))
                self.report.stat("reconstruction.discrepancy", gap)
                record = CheckRecord.bound("reconstruction-consistency", gap, RECONSTRUCTION_TOL)
                self.report.add(record)

        if result is not None and result.kind == "orbital":
            w = list(result.invariants.w)
            for ratio in result.ratios:
                numerator, denominator = w[ratio.numerator - 1], w[ratio.denominator - 1]
                gap = ratio_consistency(ds, full, numerator, denominator, ratio.psi, w, params)
                key = f"ratio{ratio.numerator}{ratio.denominator}"
                self.report.stat(f"{key}.discrepancy", gap)
                self.report.add(CheckRecord.bound(f"{key}-consistency", gap, TRAJECTORY_TOL))

        constants = list(self.constants)
        if self.problem.conversion is not None:
            constants += [r.source for r in self.problem.conversion.relations if r.constant]
        for i, c in enumerate(constants, start=1):
            drift = constant_drift(full, c, ds.n, params)
            self.report.stat(f"constant{i}.drift", drift)
            self.report.add(CheckRecord.bound(f"constant-{i}-drift", drift, DRIFT_TOL))

        conv = self.conversion
        if conv is None:
            return
        if conv.ode is not None:
            companion = ode_to_ds(conv.ode)
            offset = 1 if companion.n > conv.order else 0
            starts = []
            for b in range(u0.shape[1]):
                jets = conv.initial_jets(u0[:, b], spec.t_span[0])
                lead = [u0[conv.time_index - 1, b]] if offset else []
                starts.append(lead + list(jets))
            ode_traj = integrate(companion, np.array(starts).T, spec.t_span, step, params)
            gap = float(np.max(np.abs(ode_traj.component(1 + offset) - full.component(conv.pivot))))
        else:
            gap = self._numeric_transport(conv, u0, full, spec.t_span, step)
        self.report.stat("transport.discrepancy", gap)
        self.report.add(CheckRecord.bound("solution-transport", gap, TRAJECTORY_TOL))

    @staticmethod
    def _numeric_transport(
        conv: OdeConversion, u0: np.ndarray, full, t_span: Tuple[float, float], step: float
    ) -> float:
        """Integrate y^(m) = chain[m](inverse of the chain) with Newton inversion at every stage."""
        numeric = conv.numeric()
        working = [a for a, _ in sorted(conv.index_map.items(), key=lambda item: item[1])]
        gaps = []
        for b in range(u0.shape[1]):
            start = np.array([u0[a - 1, b] for a in working], dtype=float)
            guess = [start]

            def rhs(
                t: float, y: np.ndarray, guess: list = guess, start: np.ndarray = start
            ) -> np.ndarray:
                try:
                    top, state = numeric.top(t, y[:, 0], guess[0])
                except NewtonDivergence:
                    top, state = numeric.top(t, y[:, 0], start)
                guess[0] = state
                return np.vstack([y[1:], [[top]]])

            t0 = float(u0[conv.time_index - 1, b]) if conv.time_index is not None else t_span[0]
            span = (t0, t0 + t_span[1] - t_span[0])
            trajectory = integrate_callable(rhs, conv.initial_jets(u0[:, b], t_span[0]), span, step)
            gap = trajectory.component(1)[:, 0] - full.component(conv.pivot)[:, b]
            gaps.append(float(np.max(np.abs(gap))))
        return max(gaps)

    def run(self) -> ExampleReport:
        logger.info("running %s", self.report.tag)
        plan = [
            ("construct", self.construct),
            ("symmetry", self.symmetry),
            ("determining", self.determining),
            ("classification", self.classification),
            ("invariants", self.invariants_stage),
            ("reduction", self.reduction_stage),
            ("constants", self.constants_stage),
            ("conversion", self.conversion_stage),
            ("trajectories", self.trajectories),
        ]
        for name, step in plan:
            if self.wants(name):
                with self.stage(name):
                    step()
        return self.report


def run_example(problem: Problem, config: Optional[PipelineConfig] = None) -> ExampleReport:
    return ExampleRun(problem, config or PipelineConfig()).run()


def corpus_files(directory: Optional[Path] = None) -> List[Path]:
    directory = Path(directory) if directory else CORPUS_DIR
    return sorted(directory.glob("*.toml"), key=lambda p: (len(p.stem), p.stem))


def _run_job(job: Tuple[str, int, PipelineConfig]) -> ExampleReport:
    path, index, config = job
    problem = load_problems(path)[index]
    return run_example(problem, config)


def run_files(
    paths: Sequence[Path], config: Optional[PipelineConfig] = None
) -> List[ExampleReport]:
    """Run every instantiation of every file; reports come back in declared order."""
    config = config or PipelineConfig()
    started = time.perf_counter()
    jobs = []
    cached: Dict[int, ExampleReport] = {}
    keys: Dict[int, str] = {}
    cache = ResultsCache(config.cache_dir) if config.cache else None
    for path in paths:
        for index, problem in enumerate(load_problems(path)):
            position = len(jobs)
            jobs.append((str(path), index, config))
            if cache is not None:
                sampler = make_sampler(problem, config)
                key = report_key(
                    problem.digest,
                    f"{problem.instantiation}:{','.join(config.stages)}",
                    sampler.seed,
                    sampler.tolerances.eps_zero,
                    sampler.tolerances.trials,
                )
                keys[position] = key
                hit = cache.get(key)
                if hit is not None:
                    cached[position] = hit
    pending = [i for i in range(len(jobs)) if i not in cached]
    fresh = ParallelProcessor(config.n_jobs).map(_run_job, [jobs[i] for i in pending])
    results = dict(cached)
    for i, report in zip(pending, fresh):
        results[i] = report
        if cache is not None:
            cache.set(keys[i], report)
    if cache is not None:
        cache.close()
    logger.info(
        "ran %d example(s), %d from cache, in %s",
        len(jobs),
        len(cached),
        humanize.precisedelta(time.perf_counter() - started, minimum_unit="milliseconds"),
    )
    return [results[i] for i in range(len(jobs))]


def run_corpus(
    config: Optional[PipelineConfig] = None, directory: Optional[Path] = None
) -> List[ExampleReport]:
    return run_files(corpus_files(directory), config)
