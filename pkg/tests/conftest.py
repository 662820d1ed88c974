"""Shared fixtures."""

import tempfile
from pathlib import Path

import pytest

from symmetry_reduction.expr import Sym, dependent, jet
from symmetry_reduction.parser import ParseContext, parse
from symmetry_reduction.pipeline import CORPUS_DIR
from symmetry_reduction.sampling import Sampler


@pytest.fixture
def sampler():
    return Sampler(seed=7)


@pytest.fixture
def u1():
    return Sym(dependent(1))


@pytest.fixture
def u2():
    return Sym(dependent(2))


@pytest.fixture
def u1_dot():
    return Sym(jet(1, 1))


@pytest.fixture
def ex():
    """Parser for three-variable expressions with a parameter a."""
    context = ParseContext(3, parameters=("a",))

    def _parse(text: str):
        return parse(text, context)

    return _parse


@pytest.fixture
def corpus_dir():
    return CORPUS_DIR


@pytest.fixture
def temp_directory():
    """Scratch directory holding a copy of the scaling example and a broken variant."""
    with tempfile.TemporaryDirectory() as tmpdir:
        root = Path(tmpdir)

        source = (CORPUS_DIR / "example5.toml").read_text(encoding="utf-8")
        (root / "example5.toml").write_text(source, encoding="utf-8")

        # phi of the scaling field flipped in sign on u2: no longer a symmetry
        mutated = source.replace('phi = [["u1", "-u2"]]', 'phi = [["u1", "u2"]]')
        (root / "mutated.toml").write_text(mutated, encoding="utf-8")

        (root / "broken.toml").write_text(
            '[system]\nkind = "ds"\nn = 1\nequations = ["u1 +* 2"]\n', encoding="utf-8"
        )

        yield root
