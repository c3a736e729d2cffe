"""
Finite-trace semantics
Term evaluation and formula satisfaction on concrete runs, plus a bounded
satisfiability oracle that unrolls a formula over a fixed trace length into
one first-order query.
"""

from __future__ import annotations

import logging
import time
from contextlib import closing
from dataclasses import dataclass
from fractions import Fraction

import pandas as pd

from logic.parser import smt_declarations, smt_symbol, print_smt, smt_term
from logic.syntax import (
    FALSE_FO, FO, LAST_FLAG, RESERVED_PREFIX, TRUE_FO, And, Atom, Exists,
    FOAnd, FOFalse, FONot, FOOr, FOTrue, ForAll, Indexed, NegAtom, NextVar,
    Not, Num, Or, QVar, Release, TTrue, Tomorrow, Until, Var, WeakNextVar,
    WeakTomorrow, conj, congruence_modulus, disj, format_number,
    has_strong_next, has_weak_next, l_rewrite, map_fo, map_term,
    step_formula, substitute_last,
)
from smt.session import (
    DEFAULT_TIMEOUT_MS, Sat, Unknown, Unsat, check_smt_text, make_session,
)

log = logging.getLogger(__name__)


class EvaluationError(RuntimeError):
    """Evaluation outside the domain of the semantics (bad index, unbound variable...)."""


class _NotWellDefined:
    """Value of a next-term at the last instant of a run."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NotWellDefined"


NOT_WELL_DEFINED = _NotWellDefined()


# ============================================================================
# RUNS
# ============================================================================
def coerce_value(value, sort):
    if sort in ("Real", "Int"):
        if isinstance(value, bool):
            raise EvaluationError(f"Boolean value for arithmetic sort {sort}")
        value = Fraction(value)
        if sort == "Int" and value.denominator != 1:
            raise EvaluationError(f"non-integer value {value} for sort Int")
        return value
    return str(value)


@dataclass
class Run:
    """
    A first-order structure plus a non-empty sequence of state assignments.

    ``structure`` interprets uninterpreted sorts and symbols; it may be None
    when the signature has none.
    """
    signature: object
    states: list
    structure: object = None

    def __post_init__(self):
        if not self.states:
            raise EvaluationError("a run has at least one state")
        sorts = self.signature.var_sorts
        coerced = []
        for index, state in enumerate(self.states):
            missing = set(sorts) - set(state)
            if missing:
                raise EvaluationError(f"state {index} assigns no value to {sorted(missing)}")
            coerced.append({name: coerce_value(state[name], sort) for name, sort in sorts.items()})
        self.states = coerced

    def __len__(self):
        return len(self.states)

    def value(self, name, index):
        return self.states[index][name]

    def to_frame(self):
        columns = [n for n in self.signature.var_names if not n.startswith(RESERVED_PREFIX)]
        rows = [
            {"step": i, **{n: _show(state[n]) for n in columns}}
            for i, state in enumerate(self.states)
        ]
        return pd.DataFrame(rows, columns=["step", *columns])

    def __str__(self):
        return self.to_frame().to_string(index=False)


def _show(value):
    return format_number(value) if isinstance(value, Fraction) else str(value)


# ============================================================================
# EVALUATION
# ============================================================================
def _smt_mod(a, b):
    if b == 0:
        raise EvaluationError("modulus by zero")
    return a % abs(b)


def _smt_div(a, b):
    return (a - _smt_mod(a, b)) / b


ARITHMETIC = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "mod": _smt_mod,
    "div": _smt_div,
}

COMPARE = {
    "=": lambda a, b: a == b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


class Evaluator:
    """Satisfaction checker for one run; temporal results are memoised per position."""

    def __init__(self, run, timeout_ms=DEFAULT_TIMEOUT_MS):
        self.run = run
        self.timeout_ms = timeout_ms
        self._memo = {}

    # -- terms ---------------------------------------------------------------
    def check_index(self, i):
        if not 0 <= i < len(self.run):
            raise EvaluationError(f"instant {i} outside run of length {len(self.run)}")

    def term(self, i, env, t):
        self.check_index(i)
        if isinstance(t, Var):
            return self.run.value(t.name, i)
        if isinstance(t, QVar):
            if t.name not in env:
                raise EvaluationError(f"unbound quantified variable '{t.name}'")
            return env[t.name]
        if isinstance(t, (NextVar, WeakNextVar)):
            if i == len(self.run) - 1:
                return NOT_WELL_DEFINED
            return self.run.value(t.name, i + 1)
        if isinstance(t, Num):
            return Fraction(t.value)
        if isinstance(t, Indexed):
            raise EvaluationError(f"indexed constant '{t}' in a state formula")
        args = [self.term(i, env, a) for a in t.args]
        if any(a is NOT_WELL_DEFINED for a in args):
            return NOT_WELL_DEFINED
        if t.fn in ARITHMETIC:
            if len(args) == 1:
                return -args[0]
            return ARITHMETIC[t.fn](*args)
        return self.apply(t.fn, args)

    def table(self, symbol):
        structure = self.run.structure
        if structure is None or symbol not in structure.tables:
            raise EvaluationError(f"no interpretation for '{symbol}'")
        return structure.tables[symbol]

    def apply(self, symbol, args):
        try:
            return self.table(symbol).apply(args)
        except KeyError:
            raise EvaluationError(f"'{symbol}' undefined on {tuple(args)}") from None

    # -- first-order formulas ---------------------------------------------
    def atom(self, i, env, literal):
        if literal.pred == LAST_FLAG:
            return i < len(self.run) - 1
        args = [self.term(i, env, a) for a in literal.args]
        if any(a is NOT_WELL_DEFINED for a in args):
            return not any(has_strong_next(a) for a in literal.args)
        modulus = congruence_modulus(literal.pred)
        if modulus is not None:
            return (args[0] - args[1]) % modulus == 0
        if literal.pred in COMPARE:
            return COMPARE[literal.pred](*args)
        return bool(self.apply(literal.pred, args))

    def first_order(self, i, env, formula):
        if isinstance(formula, Atom):
            return self.atom(i, env, formula)
        if isinstance(formula, NegAtom):
            return not self.atom(i, env, formula.atom)
        if isinstance(formula, FOAnd):
            return all(self.first_order(i, env, f) for f in formula.items)
        if isinstance(formula, FOOr):
            return any(self.first_order(i, env, f) for f in formula.items)
        if isinstance(formula, FOTrue):
            return True
        if isinstance(formula, FOFalse):
            return False
        if isinstance(formula, FONot):
            return not self.first_order(i, env, formula.body)
        if isinstance(formula, (Exists, ForAll)):
            return self.quantifier(i, env, formula)
        raise EvaluationError(f"not a first-order formula: {formula!r}")

    def quantifier(self, i, env, formula):
        sort = formula.var.sort
        if sort in ("Real", "Int"):
            return self.decide_closed(self.ground(i, env, formula))
        structure = self.run.structure
        if structure is None or sort not in structure.domains:
            raise EvaluationError(f"no domain for sort {sort}")
        name = formula.var.name
        results = (self.first_order(i, {**env, name: e}, formula.body)
                   for e in structure.domains[sort])
        return any(results) if isinstance(formula, Exists) else all(results)

    def ground(self, i, env, formula):
        """Replace state and next terms by the run's values at instant ``i``."""
        last = i == len(self.run) - 1

        def leaf(t):
            if isinstance(t, (Var, NextVar, WeakNextVar)) or (isinstance(t, QVar) and t.name in env):
                value = self.term(i, env, t)
                return Num(value, t.sort)
            return t

        def literal(lit):
            if lit.pred == LAST_FLAG:
                return TRUE_FO if self.first_order(i, env, lit) else FALSE_FO
            nexts = any(has_strong_next(a) or has_weak_next(a) for a in lit.args)
            if last and nexts:
                value = not any(has_strong_next(a) for a in lit.args)
                if isinstance(lit, NegAtom):
                    value = not value
                return TRUE_FO if value else FALSE_FO
            args = tuple(map_term(a, leaf) for a in lit.args)
            return type(lit)(lit.pred, args)

        return map_fo(formula, literal)

    def decide_closed(self, formula):
        if isinstance(formula, (FOTrue, FOFalse)):
            return isinstance(formula, FOTrue)
        signature = self.run.signature
        lines = [line for line in smt_declarations(signature) if line.startswith("(declare-sort")]
        lines += self.definitions()
        lines.append(f"(assert {print_smt(formula)})")
        verdict = check_smt_text("\n".join(lines), self.timeout_ms)
        if isinstance(verdict, Unknown):
            raise EvaluationError(f"solver could not decide quantified subformula: {verdict.reason}")
        return isinstance(verdict, Sat)

    def definitions(self):
        signature = self.run.signature
        symbols = [(n, p, "Bool") for n, p in signature.predicates.items()]
        symbols += [(n, p, r) for n, (p, r) in signature.functions.items()]
        out = []
        for name, params, result in symbols:
            table = self.table(name)
            formals = " ".join(f"(a{k} {s})" for k, s in enumerate(params))
            body = _smt_value(table.default, result)
            for key, value in table.entries.items():
                test = " ".join(f"(= a{k} {_smt_value(v, s)})" for k, (v, s) in enumerate(zip(key, params)))
                if len(params) > 1:
                    test = f"(and {test})"
                test = test or "true"
                body = f"(ite {test} {_smt_value(value, result)} {body})"
            out.append(f"(define-fun {smt_symbol(name)} ({formals}) {result} {body})")
        return out

    # -- temporal formulas ---------------------------------------------------
    def holds(self, i, formula):
        self.check_index(i)
        key = (i, formula)
        if key in self._memo:
            return self._memo[key]
        result = self._holds(i, formula)
        self._memo[key] = result
        return result

    def _holds(self, i, formula):
        n = len(self.run)
        if isinstance(formula, FO):
            return self.first_order(i, {}, formula.fo)
        if isinstance(formula, TTrue):
            return True
        if isinstance(formula, And):
            return self.holds(i, formula.left) and self.holds(i, formula.right)
        if isinstance(formula, Or):
            return self.holds(i, formula.left) or self.holds(i, formula.right)
        if isinstance(formula, Tomorrow):
            return i + 1 < n and self.holds(i + 1, formula.body)
        if isinstance(formula, WeakTomorrow):
            return i + 1 >= n or self.holds(i + 1, formula.body)
        if isinstance(formula, Until):
            for j in range(i, n):
                if self.holds(j, formula.right):
                    return True
                if not self.holds(j, formula.left):
                    return False
            return False
        if isinstance(formula, Release):
            for j in range(i, n):
                if not self.holds(j, formula.right):
                    return False
                if self.holds(j, formula.left):
                    return True
            return True
        if isinstance(formula, Not):
            return not self.holds(i, formula.body)
        raise EvaluationError(f"not a temporal formula: {formula!r}")


def _smt_value(value, sort):
    if sort == "Bool":
        return "true" if value else "false"
    if sort in ("Real", "Int"):
        return smt_term(Num(Fraction(value), sort))
    raise EvaluationError(f"element of sort {sort} in an arithmetic quantifier")


# ============================================================================
# BOUNDED ORACLE
# ============================================================================
@dataclass(frozen=True)
class BoundedSat:
    run: Run


@dataclass(frozen=True)
class UnsatAtLength:
    length: int


@dataclass(frozen=True)
class Inconclusive:
    reason: str


class Unroller:
    """
    Unrolls a temporal formula over positions 0..n-1 into a first-order
    formula over indexed constants. Past the last position X is false and
    wX is true; until and release follow their fixpoint unfoldings.
    """

    def __init__(self, length):
        if length < 1:
            raise ValueError("trace length must be at least 1")
        self.length = length
        self._memo = {}

    def at(self, formula, i):
        key = (formula, i)
        if key not in self._memo:
            self._memo[key] = self._encode(formula, i)
        return self._memo[key]

    def _encode(self, formula, i):
        n = self.length
        if isinstance(formula, FO):
            stepped = step_formula(l_rewrite(formula.fo), i)
            return substitute_last(stepped, i < n - 1)
        if isinstance(formula, TTrue):
            return TRUE_FO
        if isinstance(formula, And):
            return conj([self.at(formula.left, i), self.at(formula.right, i)])
        if isinstance(formula, Or):
            return disj([self.at(formula.left, i), self.at(formula.right, i)])
        if isinstance(formula, Tomorrow):
            return self.at(formula.body, i + 1) if i + 1 < n else FALSE_FO
        if isinstance(formula, WeakTomorrow):
            return self.at(formula.body, i + 1) if i + 1 < n else TRUE_FO
        if isinstance(formula, Until):
            acc = FALSE_FO
            for j in range(n - 1, i - 1, -1):
                acc = disj([self.at(formula.right, j), conj([self.at(formula.left, j), acc])])
            return acc
        if isinstance(formula, Release):
            acc = TRUE_FO
            for j in range(n - 1, i - 1, -1):
                acc = conj([self.at(formula.right, j), disj([self.at(formula.left, j), acc])])
            return acc
        raise EvaluationError(f"cannot unroll {formula!r}; convert to NNF first")


# ============================================================================
# MAIN / PUBLIC API
# ============================================================================
def eval_term(run, i, env, term):
    """Value of ``term`` at instant ``i``, or NOT_WELL_DEFINED for next-terms at the end."""
    return Evaluator(run).term(i, dict(env or {}), term)


def holds(run, i, formula, timeout_ms=DEFAULT_TIMEOUT_MS):
    """Whether ``run`` satisfies ``formula`` at instant ``i``."""
    return Evaluator(run, timeout_ms).holds(i, formula)


def bounded_sat(formula, signature, length, solver_cmd=None, timeout_ms=DEFAULT_TIMEOUT_MS):
    """
    Decide whether ``formula`` has a model of exactly ``length`` states.

    Returns
    -------
    BoundedSat | UnsatAtLength | Inconclusive
    """
    encoded = Unroller(length).at(formula, 0)
    values = [Indexed(n, i, s) for i in range(length) for n, s in signature.state_vars]
    with closing(make_session(signature, solver_cmd, timeout_ms)) as session:
        verdict = session.check([encoded], values)
    if isinstance(verdict, Unsat):
        return UnsatAtLength(length)
    if isinstance(verdict, Unknown):
        return Inconclusive(verdict.reason)
    states = [
        {name: verdict.model[f"{name}@{i}"] for name, _ in signature.state_vars}
        for i in range(length)
    ]
    return BoundedSat(Run(signature, states, verdict.structure))


def bounded_sweep(formula, signature, max_length, stop_at_sat=True, **kwargs):
    """
    Run the bounded oracle for lengths 1..max_length.

    Returns
    -------
    (pd.DataFrame, BoundedSat | None)
        One row per length tried, and the first satisfying outcome if any.
    """
    rows, found = [], None
    for length in range(1, max_length + 1):
        started = time.perf_counter()
        outcome = bounded_sat(formula, signature, length, **kwargs)
        seconds = time.perf_counter() - started
        label = {BoundedSat: "SAT", UnsatAtLength: "UNSAT"}.get(type(outcome), "INCONCLUSIVE")
        rows.append({
            "length": length,
            "outcome": label,
            "reason": getattr(outcome, "reason", ""),
            "seconds": round(seconds, 3),
        })
        log.info("bounded check at length %d: %s", length, label)
        if isinstance(outcome, BoundedSat) and found is None:
            found = outcome
            if stop_at_sat:
                break
    return pd.DataFrame(rows), found
