"""Tests for tableau.history: prefix effects and history constraints."""

from fractions import Fraction

import pytest

from logic.parser import parse_formula
from logic.syntax import (
    LAST, TRUE_FO, App, Atom, NextVar, Num, Var, conj, is_quantifier_free,
)
from smt.session import Entailment, entails
from tableau.engine import label_constraint, prefixes
from tableau.history import HistoryBuilder, Poised, history_constraint

x, y = Var("x", "Real"), Var("y", "Real")
nx_, ny = NextVar("x", "Real"), NextVar("y", "Real")


def num(v):
    return Num(Fraction(v), "Real")


ITERATE = conj([Atom(">", (ny, y)), Atom("<=", (nx_, x))])
START = conj([Atom("<", (x, num(0))), Atom("=", (y, num(1))), ITERATE])
EXPECTED = conj([Atom("<", (x, num(0))), Atom(">", (y, num(1))), LAST])


def equivalent(a, b, signature):
    return entails(a, b, signature) is Entailment.YES and entails(b, a, signature) is Entailment.YES


class TestHistoryConstraint:
    def test_empty_sequence(self, lra):
        assert history_constraint([], lra) == TRUE_FO

    @pytest.mark.parametrize("length", [1, 2, 3])
    def test_rightmost_branch_of_example_1(self, lra, length):
        h = history_constraint([START] + [ITERATE] * (length - 1), lra)
        assert is_quantifier_free(h)
        assert equivalent(h, EXPECTED, lra)

    def test_histories_along_the_branch_are_equivalent(self, lra):
        entry = None
        for index, constraint in enumerate([START, ITERATE, ITERATE]):
            entry = Poised(index, frozenset(), constraint, entry)
        builder = HistoryBuilder(lra)
        h0, h1, h2 = (builder.history(e) for e in entry.chain)
        assert entails(h2, h1, lra) is Entailment.YES
        assert entails(h1, h2, lra) is Entailment.YES
        assert entails(h1, h0, lra) is Entailment.YES
        assert entails(h0, h1, lra) is Entailment.YES

    def test_without_elimination_quantifiers_remain(self, lra):
        h = history_constraint([START, ITERATE], lra, use_qe=False)
        assert not is_quantifier_free(h)
        assert equivalent(h, EXPECTED, lra)

    def test_euf_histories_are_trivial(self, euf):
        phi = parse_formula("F (p(next(x)) & X (!p(x)))", euf)
        for labels in prefixes(phi, 2):
            if len(labels) == 2 and labels[0] == labels[1]:
                entry = None
                for index, label in enumerate(labels):
                    entry = Poised(index, label, label_constraint(label), entry)
                builder = HistoryBuilder(euf)
                assert [builder.history(e) for e in entry.chain] == [TRUE_FO, TRUE_FO]
                break
        else:
            pytest.fail("no branch repeats its first poised label")

    def test_decreasing_counter_is_not_pruned(self, lra):
        # x > 1 at the start, then x decreases by one at every step
        decrease = Atom("=", (nx_, App("-", (x, num(1)), "Real")))
        first = conj([Atom(">", (x, num(1))), decrease])
        h0 = history_constraint([first], lra)
        h1 = history_constraint([first, decrease], lra)
        assert equivalent(h0, conj([Atom(">", (x, num(0))), LAST]), lra)
        assert equivalent(h1, conj([Atom(">", (x, num(-1))), LAST]), lra)
        assert entails(h1, h0, lra) is Entailment.NO

    def test_prefix_is_cached(self, lra):
        entry = Poised(0, frozenset(), START)
        builder = HistoryBuilder(lra)
        first = builder.prefix(entry)
        assert builder.prefix(entry) is first
        assert entry.prefix is first
