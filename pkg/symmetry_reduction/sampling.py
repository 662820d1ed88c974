"""Randomized zero testing and deterministic sample generation."""

import logging
import zlib
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .expr import Expr, Symbol, evaluate_batch, render, symbols_of

logger = logging.getLogger(__name__)

Point = Dict[Symbol, float]
Samples = Dict[Symbol, np.ndarray]


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds shared by every check."""

    eps_zero: float = 1e-8
    eps_pole: float = 1e-12
    low: float = 0.5
    high: float = 1.5
    exclusion_margin: float = 0.1
    trials: int = 100
    max_resample_factor: int = 10
    q_max: int = 6
    rank_threshold: float = 1e-8
    rank_samples: int = 20


class Verdict(Enum):
    ZERO = "zero"
    NONZERO = "nonzero"
    INCONCLUSIVE = "inconclusive"


@dataclass
class ZeroVerdict:
    """Outcome of a sampled identity test."""

    status: Verdict
    max_residual: float = 0.0
    samples: int = 0
    pole_hits: int = 0
    witness: Optional[Point] = None
    label: str = ""

    @property
    def ok(self) -> bool:
        return self.status is Verdict.ZERO

    def witness_text(self) -> str:
        if not self.witness:
            return ""
        return ",".join(f"{s.label}={v:.17g}" for s, v in sorted(self.witness.items()))


def combine(verdicts: Iterable[ZeroVerdict], label: str = "") -> ZeroVerdict:
    """Fold several verdicts into one: any NonZero wins, then Inconclusive."""
    verdicts = list(verdicts)
    if not verdicts:
        return ZeroVerdict(Verdict.ZERO, label=label)
    worst = max(v.max_residual for v in verdicts)
    samples = sum(v.samples for v in verdicts)
    poles = sum(v.pole_hits for v in verdicts)
    for status in (Verdict.NONZERO, Verdict.INCONCLUSIVE):
        for v in verdicts:
            if v.status is status:
                return ZeroVerdict(status, worst, samples, poles, v.witness, v.label or label)
    return ZeroVerdict(Verdict.ZERO, worst, samples, poles, None, label)


def make_rng(seed: int, label: str = "") -> np.random.Generator:
    """Generator derived from (master seed, label); identical inputs give identical streams."""
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(label.encode("utf-8"))]))


@dataclass(frozen=True)
class SamplingBox:
    """Uniform box with excluded neighbourhoods of chosen denominators."""

    low: float = 0.5
    high: float = 1.5
    exclusions: Tuple[Expr, ...] = ()
    margin: float = 0.1
    fixed: Mapping[Symbol, float] = field(default_factory=dict)

    def symbols_for(self, symbols: Iterable[Symbol]) -> List[Symbol]:
        wanted = set(symbols) | set(symbols_of(self.exclusions))
        return sorted(wanted)

    def _accept(self, env: Samples, pole_guard: float) -> np.ndarray:
        size = len(next(iter(env.values()))) if env else 1
        keep = np.ones(size, dtype=bool)
        for exclusion in self.exclusions:
            values = evaluate_batch(exclusion, env, pole_guard)
            keep &= np.isfinite(values) & (np.abs(values) >= self.margin)
        return keep

    def draw(
        self,
        symbols: Iterable[Symbol],
        count: int,
        rng: np.random.Generator,
        pole_guard: float = 1e-12,
        max_factor: int = 10,
    ) -> Samples:
        """Draw up to ``count`` rows outside the excluded neighbourhoods."""
        ordered = self.symbols_for(symbols)
        if not ordered:
            return {}
        free = [s for s in ordered if s not in self.fixed]
        chunks: Dict[Symbol, List[np.ndarray]] = {s: [] for s in ordered}
        accepted = 0
        attempted = 0
        while accepted < count and attempted < max_factor * count:
            size = max(count - accepted, 8)
            block = rng.uniform(self.low, self.high, size=(len(free), size))
            env: Samples = {s: block[i] for i, s in enumerate(free)}
            for s in ordered:
                if s in self.fixed:
                    env[s] = np.full(size, float(self.fixed[s]))
            keep = self._accept(env, pole_guard)
            attempted += size
            take = np.flatnonzero(keep)[: count - accepted]
            for s in ordered:
                chunks[s].append(env[s][take])
            accepted += len(take)
        return {s: np.concatenate(parts) for s, parts in chunks.items()}


@dataclass(frozen=True)
class Sampler:
    """Bundles tolerances, sampling box and master seed for one problem."""

    tolerances: Tolerances = Tolerances()
    box: SamplingBox = SamplingBox()
    seed: int = 42

    def with_exclusions(self, exclusions: Sequence[Expr]) -> "Sampler":
        box = replace(self.box, exclusions=self.box.exclusions + tuple(exclusions))
        return replace(self, box=box)

    def rng(self, label: str) -> np.random.Generator:
        return make_rng(self.seed, label)

    def points(self, symbols: Iterable[Symbol], count: int, label: str) -> Samples:
        return self.box.draw(
            symbols,
            count,
            self.rng(label),
            self.tolerances.eps_pole,
            self.tolerances.max_resample_factor,
        )

    def is_zero(self, e: Expr, label: str = "", trials: Optional[int] = None) -> ZeroVerdict:
        trials = trials or self.tolerances.trials
        return is_zero(e, trials, self.box, self.rng(label), self.tolerances, label)

    def all_zero(self, exprs: Sequence[Expr], label: str = "") -> ZeroVerdict:
        return combine(
            (self.is_zero(e, f"{label}#{i}") for i, e in enumerate(exprs)), label
        )


def is_zero(
    e: Expr,
    trials: int,
    box: SamplingBox,
    rng: np.random.Generator,
    tolerances: Tolerances = Tolerances(),
    label: str = "",
) -> ZeroVerdict:
    """Decide e == 0 by evaluation at random points of the box.

    Pole hits are resampled, up to ``max_resample_factor * trials`` draws.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    symbols = sorted(e.free_symbols)
    collected = 0
    drawn = 0
    pole_hits = 0
    worst = 0.0
    limit = tolerances.max_resample_factor * trials
    while collected < trials and drawn < limit:
        env = box.draw(
            symbols, trials - collected, rng, tolerances.eps_pole, tolerances.max_resample_factor
        )
        size = len(next(iter(env.values()))) if env else 1
        if size == 0:
            break
        values = evaluate_batch(e, env, tolerances.eps_pole)
        values = np.broadcast_to(values, (size,))
        finite = np.isfinite(values)
        drawn += size
        pole_hits += int((~finite).sum())
        residual = np.where(finite, np.abs(values), 0.0)
        if finite.any():
            worst = max(worst, float(residual.max()))
        offending = finite & (residual > tolerances.eps_zero)
        if offending.any():
            i = int(np.argmax(offending))
            witness = {s: float(v[i]) for s, v in env.items()}
            logger.debug("nonzero %s: |%s| = %.3g", label, render(e)[:80], residual[i])
            return ZeroVerdict(Verdict.NONZERO, worst, drawn, pole_hits, witness, label)
        collected += int(finite.sum())
        if not env:
            collected = trials
    if drawn == 0 or pole_hits * 2 > drawn or collected == 0:
        logger.warning(
            "inconclusive zero test %s (%d of %d samples at poles)", label, pole_hits, drawn
        )
        return ZeroVerdict(Verdict.INCONCLUSIVE, worst, drawn, pole_hits, None, label)
    return ZeroVerdict(Verdict.ZERO, worst, drawn, pole_hits, None, label)
