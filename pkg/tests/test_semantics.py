"""Tests for analysis.semantics: term evaluation, satisfaction and the bounded oracle."""

from fractions import Fraction

import pytest

from analysis.semantics import (
    NOT_WELL_DEFINED, BoundedSat, EvaluationError, Run, UnsatAtLength,
    Unroller, bounded_sat, bounded_sweep, eval_term, holds,
)
from logic.parser import load_problem, parse_formula
from logic.syntax import TRUE, NextVar, Var
from smt.session import Interpretation, Structure

from conftest import make_signature


# ======================== Terms ========================

class TestEvalTerm:
    def test_strong_next_at_first_instant(self, example_run):
        assert eval_term(example_run, 0, {}, NextVar("x", "Real")) == 0

    def test_next_at_last_instant_is_not_well_defined(self, example_run):
        assert eval_term(example_run, 2, {}, NextVar("x", "Real")) is NOT_WELL_DEFINED

    def test_state_variable(self, example_run):
        assert eval_term(example_run, 1, {}, Var("x", "Real")) == 0

    def test_instant_outside_run(self, example_run):
        with pytest.raises(EvaluationError):
            eval_term(example_run, 3, {}, Var("x", "Real"))


# ======================== Satisfaction ========================

class TestHolds:
    def test_until(self, example_run, formula):
        assert holds(example_run, 0, formula("(y >= x) U (x = y)"))

    def test_weak_next_globally(self, example_run, formula):
        assert holds(example_run, 0, formula("G (wnext(x) > x)"))

    def test_strong_next_globally_fails_at_the_end(self, example_run, formula):
        assert not holds(example_run, 0, formula("G (next(x) > x)"))

    def test_truth(self, example_run):
        assert holds(example_run, 0, TRUE)

    def test_tomorrow_at_last_instant(self, example_run, formula):
        assert not holds(example_run, 2, formula("X (x = 2)"))
        assert holds(example_run, 2, formula("wX (x = 100)"))

    def test_negated_next_atom_at_the_end(self, example_run, formula):
        # !(next(x) > x) is the negation of an atom that is false at the end
        assert holds(example_run, 2, formula("!(next(x) > x)"))

    def test_arithmetic_quantifier(self, example_run, formula):
        assert holds(example_run, 0, formula("exists z:Real. ((x < z) & (z < y))"))
        assert not holds(example_run, 2, formula("exists z:Real. ((x < z) & (z < y))"))

    def test_euf_quantifier_over_domain(self):
        sig = make_signature("EUF", variables=("x",), sorts=("S",), predicates={"p": ("S",)})
        structure = Structure({"S": ("a", "b")}, {"p": Interpretation({("a",): True}, False)})
        run = Run(sig, [{"x": "a"}, {"x": "b"}], structure)
        assert holds(run, 0, parse_formula("p(x) & X !p(x)", sig))
        assert holds(run, 0, parse_formula("exists w:S. (!p(w))", sig))
        assert not holds(run, 0, parse_formula("forall w:S. (p(w))", sig))

    def test_congruence(self):
        sig = make_signature("LIA", variables=("x", "y"))
        run = Run(sig, [{"x": 1, "y": 7}])
        assert holds(run, 0, parse_formula("y =mod3 x", sig))
        assert not holds(run, 0, parse_formula("y =mod4 x", sig))


class TestRun:
    def test_empty_run_rejected(self, lra):
        with pytest.raises(EvaluationError):
            Run(lra, [])

    def test_missing_value_rejected(self, lra):
        with pytest.raises(EvaluationError):
            Run(lra, [{"x": 0}])

    def test_values_are_exact(self, lra):
        run = Run(lra, [{"x": "1/3", "y": 0}])
        assert run.value("x", 0) == Fraction(1, 3)

    def test_frame(self, example_run):
        frame = example_run.to_frame()
        assert list(frame.columns) == ["step", "x", "y"]
        assert frame["x"].tolist() == ["-1", "0", "2"]


# ======================== Bounded oracle ========================

EXAMPLE_1 = "(x < 0) & (y = 1) & (((next(y) > y) & (next(x) <= x)) U (x = y))"


class TestBoundedSat:
    @pytest.mark.parametrize("length", range(1, 7))
    def test_example_1_has_no_model(self, lra, length):
        assert bounded_sat(parse_formula(EXAMPLE_1, lra), lra, length) == UnsatAtLength(length)

    def test_single_state(self, lra):
        outcome = bounded_sat(parse_formula("x = 0", lra), lra, 1)
        assert isinstance(outcome, BoundedSat)
        assert outcome.run.value("x", 0) == 0

    def test_model_validates(self, lra):
        phi = parse_formula("(y >= x) U (x = y)", lra)
        outcome = bounded_sat(phi, lra, 3)
        assert isinstance(outcome, BoundedSat)
        assert len(outcome.run) == 3
        assert holds(outcome.run, 0, phi)

    def test_strong_next_needs_a_successor(self, lra):
        phi = parse_formula("next(x) > x", lra)
        assert isinstance(bounded_sat(phi, lra, 1), UnsatAtLength)
        assert isinstance(bounded_sat(phi, lra, 2), BoundedSat)

    def test_euf_with_unused_predicate(self):
        ex = load_problem("theory EUF\nsort S\nvars x:S, y:S\npred p(S)\nformula x = y\n")
        outcome = bounded_sat(ex.formula, ex.signature, 1)
        assert isinstance(outcome, BoundedSat)
        assert outcome.run.value("x", 0) == outcome.run.value("y", 0)
        assert holds(outcome.run, 0, ex.formula)

    def test_length_must_be_positive(self):
        with pytest.raises(ValueError):
            Unroller(0)

    def test_sweep_stops_at_first_model(self, lra):
        frame, found = bounded_sweep(parse_formula("X X (x > 0)", lra), lra, 5)
        assert frame["outcome"].tolist() == ["UNSAT", "UNSAT", "SAT"]
        assert len(found.run) == 3
