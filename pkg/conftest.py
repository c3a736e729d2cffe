"""Shared fixtures for the test suites."""

from pathlib import Path

import pytest

from analysis.semantics import Run
from logic.parser import load_problem, parse_formula
from logic.syntax import Signature, Theory

PROBLEMS = Path(__file__).parent / "problems"


def make_signature(theory="LRA", variables=("x", "y"), sorts=(), predicates=None, functions=None):
    theory = Theory(theory)
    sort = theory.arithmetic_sort or (sorts[0] if sorts else "U")
    return Signature(
        theory=theory,
        sorts=tuple(sorts) if theory is Theory.EUF else (),
        predicates=dict(predicates or {}),
        functions=dict(functions or {}),
        state_vars=tuple((v, sort) for v in variables),
    ).validate()


@pytest.fixture
def lra():
    return make_signature("LRA")


@pytest.fixture
def lia():
    return make_signature("LIA", variables=("x", "y", "z"))


@pytest.fixture
def euf():
    return make_signature("EUF", variables=("x",), sorts=("S",), predicates={"p": ("S",)})


@pytest.fixture
def formula(lra):
    """Parse a formula over x, y : Real."""
    return lambda text: parse_formula(text, lra)


@pytest.fixture
def example_run(lra):
    """x: -1, 0, 2 and y: 0, 1, 2."""
    return Run(lra, [{"x": -1, "y": 0}, {"x": 0, "y": 1}, {"x": 2, "y": 2}])


@pytest.fixture
def problem():
    """Load a problem from the problems directory by stem."""
    return lambda name: load_problem((PROBLEMS / f"{name}.ltlfmt").read_text())


@pytest.fixture
def problems_dir():
    return PROBLEMS
