"""Property suites: printing, normal forms, witness soundness, pruning and agreement with the bounded oracle."""

from fractions import Fraction

import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from analysis.fragments import classify
from analysis.semantics import BoundedSat, Run, bounded_sat, holds
from corpus import SATISFIABLE, SIGNATURES
from logic.parser import parse_formula, print_formula
from logic.syntax import (
    LAST, NOT_LAST, Atom, Exists, Indexed, NegAtom, Num, QVar, Var, conj, is_quantifier_free,
    omega, substitute, to_nnf,
)
from smt.fourier_motzkin import qe_mc
from smt.session import Entailment, Sat, Unsat, check_sat, entails, qe_backend
from tableau.engine import (
    Satisfiable, TableauConfig, Unsatisfiable, label_constraint, prefixes, solve,
)
from tableau.history import HistoryBuilder, Poised, history_constraint

LRA_ATOMS = ["x > 0", "x = y", "y <= 1", "next(x) > x", "wnext(y) = y + 1", "x + y < 2"]
LIA_ATOMS = ["x > 0", "x = 2", "x < y", "y = 1", "x + y = 3", "x =mod2 1", "z >= x",
             "wnext(x) = x", "next(z) > z"]

UNARY = ["X", "wX", "F", "G", "!"]
BINARY = ["&", "|", "U", "R"]

SLOW = settings(max_examples=200, deadline=None,
                suppress_health_check=[HealthCheck.too_slow, HealthCheck.filter_too_much])


def formulas(atoms, max_leaves=4):
    """Fully parenthesised formula texts over the given atoms."""
    def extend(children):
        return st.one_of(
            st.builds(lambda op, a: f"{op} ({a})", st.sampled_from(UNARY), children),
            st.builds(lambda a, op, b: f"({a}) {op} ({b})", children, st.sampled_from(BINARY), children),
        )
    return st.recursive(st.sampled_from(atoms), extend, max_leaves=max_leaves)


# ======================== Syntax ========================

class TestSyntaxProperties:
    @given(formulas(LRA_ATOMS, max_leaves=6))
    @settings(max_examples=200, deadline=None)
    def test_print_then_parse(self, text):
        sig = SIGNATURES["LRA"]
        phi = parse_formula(text, sig)
        assert parse_formula(print_formula(phi), sig) == phi

    @given(formulas(LRA_ATOMS, max_leaves=6))
    @settings(max_examples=200, deadline=None)
    def test_parsed_formulas_are_in_normal_form(self, text):
        phi = parse_formula(text, SIGNATURES["LRA"])
        assert to_nnf(phi) == phi


STATE_ATOMS = ["x > 0", "x = y", "y <= 1", "x + y < 2"]
runs = st.lists(
    st.fixed_dictionaries({"x": st.integers(-2, 2), "y": st.integers(-2, 2)}),
    min_size=1, max_size=3,
)


@given(formulas(STATE_ATOMS, max_leaves=5), runs)
@settings(max_examples=150, deadline=None)
def test_negation_flips_truth(text, states):
    sig = SIGNATURES["LRA"]
    run = Run(sig, states)
    assert holds(run, 0, parse_formula(f"!({text})", sig)) != holds(run, 0, parse_formula(text, sig))


# ======================== Elimination ========================

x, y = Var("x", "Real"), Var("y", "Real")
z = QVar("z", "Real")
TERMS = [x, y, z, Num(Fraction(0), "Real"), Num(Fraction(1), "Real")]


@st.composite
def mc_literals(draw):
    a, b = draw(st.lists(st.sampled_from(TERMS), min_size=2, max_size=2, unique=True)
                .filter(lambda pair: z in pair))
    op = draw(st.sampled_from(["<", "<=", "=", ">=", ">"]))
    kind = draw(st.sampled_from([Atom, Atom, NegAtom]))
    return kind(op, (a, b))


def equivalent(a, b, signature):
    return entails(a, b, signature) is Entailment.YES and entails(b, a, signature) is Entailment.YES


@pytest.mark.slow
@given(st.lists(mc_literals(), min_size=1, max_size=4))
@SLOW
def test_mc_elimination_is_equivalent(lits):
    sig = SIGNATURES["LRA"]
    formula = Exists(z, conj(lits))
    ours, backend = qe_mc(formula), qe_backend(formula, sig)
    assert is_quantifier_free(ours) and is_quantifier_free(backend)
    assert equivalent(ours, backend, sig)


# ======================== Tableau ========================

@pytest.mark.slow
@pytest.mark.parametrize("theory, text", SATISFIABLE, ids=[t for _, t in SATISFIABLE])
def test_corpus_witnesses_are_models(theory, text):
    sig = SIGNATURES[theory]
    phi = parse_formula(text, sig)
    outcome, _ = solve(phi, sig)
    assert isinstance(outcome, Satisfiable)
    assert holds(outcome.witness, 0, phi)


def test_corpus_size():
    assert len(SATISFIABLE) >= 50
    assert {theory for theory, _ in SATISFIABLE} == set(SIGNATURES)


@pytest.mark.slow
@given(formulas(LIA_ATOMS, max_leaves=3))
@SLOW
def test_agrees_with_bounded_oracle(text):
    sig = SIGNATURES["LIA"]
    phi = parse_formula(text, sig)
    report = classify(phi, sig)
    assume(report.ncs or report.fx)
    outcome, _ = solve(phi, sig)
    assert isinstance(outcome, (Satisfiable, Unsatisfiable))
    if isinstance(outcome, Satisfiable):
        run = outcome.witness
        assert holds(run, 0, phi)
        assert isinstance(bounded_sat(phi, sig, len(run)), BoundedSat)
    else:
        for length in range(1, 7):
            assert not isinstance(bounded_sat(phi, sig, length), BoundedSat)


# ======================== Pruning ========================

PRUNABLE = [(t, s) for t, s in SATISFIABLE if t in ("LRA", "LIA")][:20]


@pytest.mark.slow
@pytest.mark.parametrize("theory, text", PRUNABLE, ids=[t for _, t in PRUNABLE])
def test_disabling_prune_finds_no_longer_witness(theory, text):
    sig = SIGNATURES[theory]
    phi = parse_formula(text, sig)
    pruned, _ = solve(phi, sig)
    full, _ = solve(phi, sig, TableauConfig(prune=False, max_steps=16))
    assert isinstance(pruned, Satisfiable) and isinstance(full, Satisfiable)
    assert len(full.witness) <= len(pruned.witness)


def redundant_segments(labels, signature):
    """Pairs j < k with equal labels whose histories satisfy h(k) |= h(j)."""
    entry = None
    for index, label in enumerate(labels):
        entry = Poised(index, label, label_constraint(label), entry)
    chain = entry.chain
    builder = HistoryBuilder(signature)
    histories = [builder.history(e) for e in chain]
    for k in range(len(chain)):
        for j in range(k):
            if labels[j] == labels[k] and entails(histories[k], histories[j], signature) is Entailment.YES:
                yield j, k, [e.constraint for e in chain]


SEGMENT_CASES = [
    ("(x < 0) & (y = 1) & (((next(y) > y) & (next(x) <= x)) U (x = y))", 4),
    ("G (wnext(x) >= x) & F (x > 10)", 4),
    ("(y >= x) U (x = y)", 4),
    ("G (x > 0) & F (y = x)", 4),
    ("((next(x) > x) | (y = 0)) U (x > 3)", 4),
    ("G (y > 0)", 6),
    ("G (wnext(x) = x)", 6),
    ("G (x > 0) & G (wnext(y) >= y)", 6),
    ("G (x + y < 2)", 6),
]


@pytest.mark.slow
def test_deleting_a_redundant_segment_preserves_satisfiability():
    sig = SIGNATURES["LRA"]
    checked = 0
    for text, length in SEGMENT_CASES:
        for labels in prefixes(parse_formula(text, sig), length):
            for j, k, constraints in redundant_segments(labels, sig):
                full = check_sat(conj([omega(constraints), NOT_LAST]), sig)
                if not isinstance(full, Sat):
                    continue
                shortened = constraints[: j + 1] + constraints[k + 1:]
                assert not isinstance(check_sat(conj([omega(shortened), NOT_LAST]), sig), Unsat)
                checked += 1
    assert checked >= 50


CLOSED_BY_PRUNE = [
    "(x < 0) & (y = 1) & (((next(y) > y) & (next(x) <= x)) U (x = y))",
    "x = 0 & G (wnext(x) >= x) & F (x < 0)",
    "x < 0 & G (y = 1) & G (wnext(x) <= x) & F (x = y)",
    "G (x > 0) & F (x < 0)",
]


@pytest.mark.slow
@pytest.mark.parametrize("text", CLOSED_BY_PRUNE)
def test_pruned_formulas_have_no_short_model(text):
    sig = SIGNATURES["LRA"]
    phi = parse_formula(text, sig)
    pruned, _ = solve(phi, sig)
    assert isinstance(pruned, Unsatisfiable)
    full, _ = solve(phi, sig, TableauConfig(prune=False, max_steps=12))
    assert not isinstance(full, Satisfiable)


QUASI_MC = CLOSED_BY_PRUNE + [
    "(y >= x) U (x = y)",
    "G (wnext(x) >= x) & F (x > 10)",
    "x = 0 & G (wnext(x) > x) & F (x > y) & G (wnext(y) = y)",
    "(x < y) U (wnext(x) > x & y < 0)",
    "G (y > 0) & F (x < y) & x > 5",
]


@pytest.mark.slow
@pytest.mark.parametrize("text", QUASI_MC)
def test_quasi_mc_formulas_are_decided(text):
    sig = SIGNATURES["LRA"]
    phi = parse_formula(text, sig)
    assert classify(phi, sig).quasi_mc
    outcome, _ = solve(phi, sig)
    assert isinstance(outcome, (Satisfiable, Unsatisfiable))


# ======================== History ========================

HISTORY_FORMULAS = [
    ("LRA", "(x < 0) & (y = 1) & (((next(y) > y) & (next(x) <= x)) U (x = y))"),
    ("LRA", "G (wnext(x) >= x + y) & F (x > 2)"),
    ("LRA", "(next(x) = y) U (y > x)"),
    ("LIA", "G (wnext(x) = x + 1) & (z < x) U (y = 2)"),
]


@pytest.mark.slow
@pytest.mark.parametrize("theory, text", HISTORY_FORMULAS)
def test_last_state_of_a_model_satisfies_the_history(theory, text):
    sig = SIGNATURES[theory]
    checked = 0
    for labels in prefixes(parse_formula(text, sig), 3):
        constraints = [label_constraint(label) for label in labels]
        last = len(constraints)
        final = [Indexed(n, last, s) for n, s in sig.state_vars]
        verdict = check_sat(conj([omega(constraints), LAST]), sig, values=final)
        if not isinstance(verdict, Sat):
            continue
        h = history_constraint(constraints, sig)
        point = {Var(n, s): Num(Fraction(verdict.model[f"{n}@{last}"]), s) for n, s in sig.state_vars}
        assert isinstance(check_sat(conj([substitute(h, point), LAST]), sig), Sat)
        checked += 1
    assert checked > 0
