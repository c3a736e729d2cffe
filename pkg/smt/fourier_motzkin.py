"""
Fourier-Motzkin elimination for monotonicity constraints
Eliminates existential quantifiers from formulas whose literals compare two
variables, or a variable and a rational constant, over the reals. Equalities
are substituted, disequalities case-split, and the remaining lower and upper
bounds of the eliminated variable paired up.
"""

from __future__ import annotations

import itertools
import logging
from fractions import Fraction

from logic.syntax import (
    LAST_FLAG, STATE_TERMS, Atom, Exists, FOAnd, FOFalse,
    FONot, FOOr, FOTrue, ForAll, NegAtom, Num, conj, disj, fo_nnf, free_terms, negate,
)

log = logging.getLogger(__name__)

DNF_LIMIT = 10_000

# (predicate, negated) -> (normalised operator, swap operands)
_NORMALISE = {
    ("=", False): ("=", False),
    ("=", True): ("!=", False),
    ("<", False): ("<", False),
    ("<", True): ("<=", True),
    ("<=", False): ("<=", False),
    ("<=", True): ("<", True),
    (">", False): ("<", True),
    (">", True): ("<=", False),
    (">=", False): ("<=", True),
    (">=", True): ("<", False),
}


class McPreconditionError(ValueError):
    """A literal is not a monotonicity constraint."""


class DnfBlowup(RuntimeError):
    """The disjunctive normal form grew past the configured limit."""


def is_mc_term(term):
    return isinstance(term, Num) or isinstance(term, STATE_TERMS)


def is_mc_literal(literal):
    """``p op q`` with op a comparison and p, q variables (possibly next) or constants."""
    if literal.pred == LAST_FLAG:
        return True
    return (
        (literal.pred, False) in _NORMALISE
        and len(literal.args) == 2
        and all(is_mc_term(a) for a in literal.args)
    )


# ============================================================================
# CONSTRAINTS
# ============================================================================
class Constraint(tuple):
    """Normalised literal ``(op, lhs, rhs)`` with op one of = != <= <."""

    __slots__ = ()

    def __new__(cls, op, lhs, rhs):
        return super().__new__(cls, (op, lhs, rhs))

    @property
    def op(self):
        return self[0]

    @classmethod
    def of(cls, literal):
        if literal.pred == LAST_FLAG:
            return literal
        if not is_mc_literal(literal):
            raise McPreconditionError(f"not a monotonicity constraint: {literal}")
        op, swap = _NORMALISE[(literal.pred, isinstance(literal, NegAtom))]
        lhs, rhs = literal.args
        return cls(op, rhs, lhs) if swap else cls(op, lhs, rhs)

    def mentions(self, var):
        return self[1] == var or self[2] == var

    def replace(self, var, term):
        op, lhs, rhs = self
        return Constraint(op, term if lhs == var else lhs, term if rhs == var else rhs)

    def evaluate(self):
        """True or False when decided syntactically, else None."""
        op, lhs, rhs = self
        if isinstance(lhs, Num) and isinstance(rhs, Num):
            a, b = Fraction(lhs.value), Fraction(rhs.value)
        elif lhs == rhs:
            a = b = 0
        else:
            return None
        return {"=": a == b, "!=": a != b, "<=": a <= b, "<": a < b}[op]

    def to_literal(self):
        op, lhs, rhs = self
        if op == "!=":
            return NegAtom("=", (lhs, rhs))
        return Atom(op, (lhs, rhs))


def _as_constraint(item):
    return item if isinstance(item, Constraint) else None


# ============================================================================
# ELIMINATOR
# ============================================================================
class FourierMotzkin:
    """
    Quantifier eliminator for MC formulas over LRA.

    The result mentions no eliminated variable and no constant that did not
    occur in the input.
    """

    def __init__(self, limit=DNF_LIMIT):
        self.limit = limit

    def dnf(self, formula):
        """List of cubes (lists of literals); raises DnfBlowup past the limit."""
        if isinstance(formula, FOTrue):
            return [[]]
        if isinstance(formula, FOFalse):
            return []
        if isinstance(formula, (Atom, NegAtom)):
            return [[formula]]
        if isinstance(formula, FOOr):
            cubes = [c for item in formula.items for c in self.dnf(item)]
            self._guard(len(cubes))
            return cubes
        if isinstance(formula, FOAnd):
            cubes = [[]]
            for item in formula.items:
                parts = self.dnf(item)
                self._guard(len(cubes) * len(parts))
                cubes = [a + b for a in cubes for b in parts]
            return cubes
        raise McPreconditionError(f"unexpected node in quantifier-free formula: {formula}")

    def _guard(self, size):
        if size > self.limit:
            raise DnfBlowup(f"DNF exceeds {self.limit} cubes")

    def eliminate(self, formula, variables=()):
        """Eliminate every quantifier of ``formula``, then the listed free variables."""
        formula = self.strip(fo_nnf(formula))
        for var in variables:
            formula = self.project(formula, var)
        return formula

    def strip(self, formula):
        if isinstance(formula, (Exists, ForAll)) and formula.var not in free_terms(formula.body):
            return self.strip(formula.body)
        if isinstance(formula, Exists):
            return self.project(self.strip(formula.body), formula.var)
        if isinstance(formula, ForAll):
            return negate(self.project(negate(self.strip(formula.body)), formula.var))
        if isinstance(formula, FOAnd):
            return conj(self.strip(i) for i in formula.items)
        if isinstance(formula, FOOr):
            return disj(self.strip(i) for i in formula.items)
        if isinstance(formula, FONot):
            return negate(self.strip(formula.body))
        return formula

    def project(self, formula, var):
        """Quantifier-free equivalent of ``exists var. formula``."""
        cubes = []
        for cube in self.dnf(formula):
            cubes.extend(self.project_cube([Constraint.of(l) for l in cube], var))
            self._guard(len(cubes))
        return disj(conj(self.render(c) for c in cube) for cube in cubes)

    def project_cube(self, cube, var):
        for index, item in enumerate(cube):
            c = _as_constraint(item)
            if c is None or c.op != "=" or not c.mentions(var) or c[1] == c[2]:
                continue
            other = c[2] if c[1] == var else c[1]
            rest = cube[:index] + cube[index + 1:]
            return self.project_cube([_replace(r, var, other) for r in rest], var)

        splits, keep = [], []
        for item in cube:
            c = _as_constraint(item)
            if c is not None and c.op == "!=" and c.mentions(var) and c[1] != c[2]:
                splits.append(c)
            else:
                keep.append(item)
        self._guard(2 ** len(splits))
        if splits:
            out = []
            for choice in itertools.product((0, 1), repeat=len(splits)):
                branch = list(keep)
                for side, c in zip(choice, splits):
                    branch.append(Constraint("<", c[1], c[2]) if side else Constraint("<", c[2], c[1]))
                out.extend(self.bounds(branch, var))
            return out
        return self.bounds(keep, var)

    def bounds(self, cube, var):
        lower, upper, rest = [], [], []
        for item in cube:
            c = _as_constraint(item)
            if c is None or not c.mentions(var):
                rest.append(item)
                continue
            verdict = c.evaluate()
            if verdict is True:
                continue
            if verdict is False:
                return []
            strict = c.op == "<"
            if c[2] == var:
                lower.append((c[1], strict))
            else:
                upper.append((c[2], strict))
        for (low, s1), (high, s2) in itertools.product(lower, upper):
            rest.append(Constraint("<" if s1 or s2 else "<=", low, high))
        cube = self.simplify(rest)
        return [] if cube is None else [cube]

    def simplify(self, cube):
        """Drop decided constraints; None when the cube is contradictory."""
        out = []
        for item in cube:
            c = _as_constraint(item)
            verdict = None if c is None else c.evaluate()
            if verdict is False:
                return None
            if verdict is None and item not in out:
                out.append(item)
        return out

    @staticmethod
    def render(item):
        c = _as_constraint(item)
        return item if c is None else c.to_literal()


def _replace(item, var, term):
    c = _as_constraint(item)
    return item if c is None else c.replace(var, term)


# ============================================================================
# MAIN / PUBLIC API
# ============================================================================
def qe_mc(formula, variables=(), limit=DNF_LIMIT):
    """
    Eliminate quantifiers from an MC formula by Fourier-Motzkin.

    Parameters
    ----------
    formula : FOFormula
        Literals must all be monotonicity constraints (or the last flag).
    variables : iterable of terms
        Additional free variables to eliminate existentially.

    Returns
    -------
    FOFormula
        Quantifier-free, LRA-equivalent formula over the remaining variables.

    Raises
    ------
    McPreconditionError
        On a literal that is not a monotonicity constraint.
    DnfBlowup
        When an intermediate DNF exceeds ``limit`` cubes.
    """
    result = FourierMotzkin(limit).eliminate(formula, variables)
    log.debug("qe_mc: %s -> %s", formula, result)
    return result
