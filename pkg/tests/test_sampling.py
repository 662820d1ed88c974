"""Tests for randomized zero testing."""

import numpy as np
import pytest

from symmetry_reduction.expr import ONE, ZERO, dependent, div, sub
from symmetry_reduction.sampling import (
    Sampler,
    SamplingBox,
    Verdict,
    ZeroVerdict,
    combine,
    is_zero,
    make_rng,
)


def test_identity_is_zero(sampler, u1, u2):
    identity = (u1 + u2) ** 2 - u1 ** 2 - 2 * u1 * u2 - u2 ** 2
    verdict = sampler.is_zero(identity, "square")
    assert verdict.ok
    assert verdict.samples >= sampler.tolerances.trials
    assert verdict.witness is None


def test_nonzero_reports_witness(sampler, u1, u2):
    verdict = sampler.is_zero(u1 - u2, "difference")
    assert verdict.status is Verdict.NONZERO
    assert set(verdict.witness) == {dependent(1), dependent(2)}
    assert abs(verdict.witness[dependent(1)] - verdict.witness[dependent(2)]) > 1e-8
    assert "u1=" in verdict.witness_text()


def test_constants(sampler):
    assert sampler.is_zero(ZERO).ok
    assert sampler.is_zero(ONE).status is Verdict.NONZERO


def test_all_poles_is_inconclusive(u1):
    box = SamplingBox(fixed={dependent(1): 1.0})
    sampler = Sampler(box=box)
    verdict = sampler.is_zero(div(ONE, sub(u1, ONE)), "pole")
    assert verdict.status is Verdict.INCONCLUSIVE
    assert verdict.pole_hits > 0


def test_same_seed_same_witness(u1, u2):
    first = Sampler(seed=3).is_zero(u1 * u2 - 1, "w")
    second = Sampler(seed=3).is_zero(u1 * u2 - 1, "w")
    other = Sampler(seed=4).is_zero(u1 * u2 - 1, "w")
    assert first.witness == second.witness
    assert first.witness != other.witness


def test_labels_give_independent_streams():
    a = make_rng(1, "alpha").uniform(size=4)
    b = make_rng(1, "beta").uniform(size=4)
    again = make_rng(1, "alpha").uniform(size=4)
    assert np.array_equal(a, again)
    assert not np.array_equal(a, b)


def test_exclusions_keep_samples_away(u1):
    sampler = Sampler(seed=11).with_exclusions([u1 - 1])
    samples = sampler.points([dependent(1)], 200, "excluded")
    values = samples[dependent(1)]
    assert len(values) == 200
    assert np.all(np.abs(values - 1.0) >= sampler.box.margin)
    assert np.all((values >= sampler.box.low) & (values <= sampler.box.high))


def test_all_zero_combines(sampler, u1, u2):
    good = sampler.all_zero([u1 - u1 * 1, u2 * 0])
    assert good.ok
    bad = sampler.all_zero([ZERO, u1 - u2], "pair")
    assert bad.status is Verdict.NONZERO
    assert bad.label == "pair#1"


def test_combine_prefers_nonzero_then_inconclusive():
    zero = ZeroVerdict(Verdict.ZERO, 1e-12, 10)
    unknown = ZeroVerdict(Verdict.INCONCLUSIVE, 0.0, 10, 8)
    nonzero = ZeroVerdict(Verdict.NONZERO, 0.5, 3, 0, {dependent(1): 1.0})
    assert combine([zero, unknown, nonzero]).status is Verdict.NONZERO
    assert combine([zero, unknown]).status is Verdict.INCONCLUSIVE
    merged = combine([zero, zero])
    assert merged.ok
    assert merged.samples == 20
    assert combine([]).ok


def test_trials_must_be_positive(u1):
    with pytest.raises(ValueError):
        is_zero(u1, 0, SamplingBox(), make_rng(0))
