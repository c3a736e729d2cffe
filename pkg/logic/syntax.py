"""
Abstract syntax for LTLf modulo theories
Three layers (terms, first-order formulas, temporal formulas), signatures,
and the syntactic transformations the tableau needs: NNF, closure,
stepping, L-rewriting and step-constraint encoding.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterator, Mapping

LAST_FLAG = "__last_succ"
RESERVED_PREFIX = "__"
PAD_VARIABLE = "__pad"

REAL, INT, BOOL = "Real", "Int", "Bool"

COMPARISONS = ("=", "<", "<=", ">", ">=")
ARITHMETIC = ("+", "-", "*", "mod", "div")
_CONGRUENCE = re.compile(r"^=mod(\d+)$")


class SortError(ValueError):
    """Ill-sorted term or formula, optionally carrying a source location."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = f"{line}:{column}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class Theory(str, enum.Enum):
    LRA = "LRA"
    LIA = "LIA"
    EUF = "EUF"

    @property
    def arithmetic_sort(self):
        return {Theory.LRA: REAL, Theory.LIA: INT}.get(self)


def congruence_modulus(pred):
    """Return k for the congruence predicate ``=mod<k>``, else None."""
    match = _CONGRUENCE.match(pred)
    return int(match.group(1)) if match else None


def is_builtin_predicate(pred):
    return pred in COMPARISONS or congruence_modulus(pred) is not None


# ============================================================================
# SIGNATURE
# ============================================================================
@dataclass(frozen=True, eq=False)
class Signature:
    """
    Multi-sorted signature with state variables V.

    The theory fixes the built-in sort (Real for LRA, Int for LIA); EUF
    signatures use only user-declared uninterpreted sorts. The last-state
    flag is implicit and never user-declarable.
    """
    theory: Theory = Theory.LRA
    sorts: tuple = ()
    predicates: Mapping[str, tuple] = field(default_factory=dict)
    functions: Mapping[str, tuple] = field(default_factory=dict)
    state_vars: tuple = ()

    @classmethod
    def minimal(cls, theory=Theory.LRA):
        theory = Theory(theory)
        sort = theory.arithmetic_sort
        if sort is None:
            return cls(theory=theory, sorts=("U",), state_vars=((PAD_VARIABLE, "U"),))
        return cls(theory=theory, state_vars=((PAD_VARIABLE, sort),))

    @cached_property
    def var_sorts(self):
        return dict(self.state_vars)

    @property
    def var_names(self):
        return [name for name, _ in self.state_vars]

    @property
    def value_sorts(self):
        arith = self.theory.arithmetic_sort
        return (arith,) if arith else tuple(self.sorts)

    def has_uninterpreted(self):
        return bool(self.predicates or self.functions)

    def smt_logic(self, quantified=False):
        if self.theory is Theory.EUF:
            body = "UF"
        else:
            arith = "LRA" if self.theory is Theory.LRA else "LIA"
            body = ("UF" if self.has_uninterpreted() else "") + arith
        return body if quantified else "QF_" + body

    def validate(self):
        """Check the signature invariants, raising SortError on violation."""
        if not self.state_vars:
            raise SortError("the set of state variables must be non-empty")
        names = [n for n, _ in self.state_vars]
        if len(set(names)) != len(names):
            raise SortError("duplicate state variable declaration")
        allowed = set(self.value_sorts)
        declared = set(names) | set(self.predicates) | set(self.functions)
        for name, sort in self.state_vars:
            if sort not in allowed:
                raise SortError(f"variable '{name}' has sort {sort}, not available in {self.theory.value}")
        for name in declared | set(self.sorts):
            if name == LAST_FLAG or "@" in name:
                raise SortError(f"reserved name '{name}'")
            if name.startswith(RESERVED_PREFIX) and name != PAD_VARIABLE:
                raise SortError(f"names starting with '{RESERVED_PREFIX}' are reserved: '{name}'")
        for name, args in self.predicates.items():
            for sort in args:
                if sort not in allowed:
                    raise SortError(f"predicate '{name}' uses unknown sort {sort}")
        for name, (args, result) in self.functions.items():
            for sort in (*args, result):
                if sort not in allowed:
                    raise SortError(f"function '{name}' uses unknown sort {sort}")
        return self


# ============================================================================
# TERMS
# ============================================================================
class Term:
    """Base class of terms. Every term carries its sort."""

    @cached_property
    def text(self):
        return self._render()

    def __str__(self):
        return self.text


@dataclass(frozen=True)
class Var(Term):
    name: str
    sort: str

    def _render(self):
        return self.name


@dataclass(frozen=True)
class QVar(Term):
    name: str
    sort: str

    def _render(self):
        return self.name


@dataclass(frozen=True)
class NextVar(Term):
    """Strong next reference to a state variable."""
    name: str
    sort: str

    def _render(self):
        return f"next({self.name})"


@dataclass(frozen=True)
class WeakNextVar(Term):
    """Weak next reference to a state variable."""
    name: str
    sort: str

    def _render(self):
        return f"wnext({self.name})"


@dataclass(frozen=True)
class Indexed(Term):
    """State variable at a fixed time step, rendered ``name@index``."""
    name: str
    index: int
    sort: str

    def _render(self):
        return f"{self.name}@{self.index}"


@dataclass(frozen=True)
class Num(Term):
    value: Fraction
    sort: str

    def _render(self):
        return format_number(self.value)


@dataclass(frozen=True)
class App(Term):
    fn: str
    args: tuple
    sort: str

    def _render(self):
        if self.fn in ("+", "-", "*") and len(self.args) == 2:
            return f"({self.args[0]} {self.fn} {self.args[1]})"
        if self.fn == "-" and len(self.args) == 1:
            return f"(- {self.args[0]})"
        if not self.args:
            return self.fn
        return f"{self.fn}({', '.join(str(a) for a in self.args)})"


def format_number(value):
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


STATE_TERMS = (Var, NextVar, WeakNextVar, Indexed, QVar)


def subterms(term):
    yield term
    if isinstance(term, App):
        for arg in term.args:
            yield from subterms(arg)


def has_strong_next(term):
    return any(isinstance(t, NextVar) for t in subterms(term))


def has_weak_next(term):
    return any(isinstance(t, WeakNextVar) for t in subterms(term))


def map_term(term, fn):
    """Rebuild ``term`` bottom-up, replacing leaves by ``fn(leaf)``."""
    if isinstance(term, App):
        return App(term.fn, tuple(map_term(a, fn) for a in term.args), term.sort)
    return fn(term)


# ============================================================================
# FIRST-ORDER FORMULAS
# ============================================================================
class FOFormula:

    @cached_property
    def text(self):
        return self._render()

    def __str__(self):
        return self.text


@dataclass(frozen=True)
class Atom(FOFormula):
    pred: str
    args: tuple = ()

    def _render(self):
        if is_builtin_predicate(self.pred):
            return f"({self.args[0]} {self.pred} {self.args[1]})"
        if not self.args:
            return self.pred
        return f"{self.pred}({', '.join(str(a) for a in self.args)})"


@dataclass(frozen=True)
class NegAtom(FOFormula):
    pred: str
    args: tuple = ()

    @property
    def atom(self):
        return Atom(self.pred, self.args)

    def _render(self):
        return f"!{self.atom}"


@dataclass(frozen=True)
class FOAnd(FOFormula):
    items: tuple

    def _render(self):
        return "(" + " & ".join(str(i) for i in self.items) + ")"


@dataclass(frozen=True)
class FOOr(FOFormula):
    items: tuple

    def _render(self):
        return "(" + " | ".join(str(i) for i in self.items) + ")"


@dataclass(frozen=True)
class Exists(FOFormula):
    var: Term
    body: FOFormula

    def _render(self):
        return f"(exists {self.var}:{self.var.sort}. {_paren(self.body)})"


@dataclass(frozen=True)
class ForAll(FOFormula):
    var: Term
    body: FOFormula

    def _render(self):
        return f"(forall {self.var}:{self.var.sort}. {_paren(self.body)})"


@dataclass(frozen=True)
class FOTrue(FOFormula):

    def _render(self):
        return "true"


@dataclass(frozen=True)
class FOFalse(FOFormula):

    def _render(self):
        return "false"


@dataclass(frozen=True)
class FONot(FOFormula):
    """Unrestricted negation; only present before NNF conversion."""
    body: FOFormula

    def _render(self):
        return f"!{_paren(self.body)}"


def _paren(node):
    text = str(node)
    return text if text.startswith("(") and _balanced_outer(text) else f"({text})"


def _balanced_outer(text):
    depth = 0
    for pos, char in enumerate(text):
        depth += char == "("
        depth -= char == ")"
        if depth == 0 and pos < len(text) - 1:
            return False
    return True


TRUE_FO = FOTrue()
FALSE_FO = FOFalse()
LAST = Atom(LAST_FLAG, ())
NOT_LAST = NegAtom(LAST_FLAG, ())
LITERALS = (Atom, NegAtom)


def conj(items):
    """Flattening, constant-folding conjunction."""
    out = []
    for item in items:
        if isinstance(item, FOTrue):
            continue
        if isinstance(item, FOFalse):
            return FALSE_FO
        for part in (item.items if isinstance(item, FOAnd) else (item,)):
            if part not in out:
                out.append(part)
    if not out:
        return TRUE_FO
    return out[0] if len(out) == 1 else FOAnd(tuple(out))


def disj(items):
    out = []
    for item in items:
        if isinstance(item, FOFalse):
            continue
        if isinstance(item, FOTrue):
            return TRUE_FO
        for part in (item.items if isinstance(item, FOOr) else (item,)):
            if part not in out:
                out.append(part)
    if not out:
        return FALSE_FO
    return out[0] if len(out) == 1 else FOOr(tuple(out))


def exists_(variables, body):
    """Existentially bind those of ``variables`` that occur free in ``body``."""
    free = free_terms(body)
    for var in reversed(list(variables)):
        if var in free:
            body = Exists(var, body)
    return body


def negate(formula):
    """NNF negation of a first-order formula."""
    if isinstance(formula, Atom):
        return NegAtom(formula.pred, formula.args)
    if isinstance(formula, NegAtom):
        return formula.atom
    if isinstance(formula, FOAnd):
        return FOOr(tuple(negate(i) for i in formula.items))
    if isinstance(formula, FOOr):
        return FOAnd(tuple(negate(i) for i in formula.items))
    if isinstance(formula, Exists):
        return ForAll(formula.var, negate(formula.body))
    if isinstance(formula, ForAll):
        return Exists(formula.var, negate(formula.body))
    if isinstance(formula, FOTrue):
        return FALSE_FO
    if isinstance(formula, FOFalse):
        return TRUE_FO
    if isinstance(formula, FONot):
        return fo_nnf(formula.body)
    raise TypeError(f"not a first-order formula: {formula!r}")


def fo_nnf(formula):
    if isinstance(formula, FONot):
        return negate(fo_nnf(formula.body))
    if isinstance(formula, FOAnd):
        return FOAnd(tuple(fo_nnf(i) for i in formula.items))
    if isinstance(formula, FOOr):
        return FOOr(tuple(fo_nnf(i) for i in formula.items))
    if isinstance(formula, Exists):
        return Exists(formula.var, fo_nnf(formula.body))
    if isinstance(formula, ForAll):
        return ForAll(formula.var, fo_nnf(formula.body))
    return formula


def map_fo(formula, literal_fn, term_fn=None):
    """
    Rebuild a formula, mapping each literal through ``literal_fn`` and, when
    given, each term leaf through ``term_fn`` first. Binders are kept.
    """
    if isinstance(formula, LITERALS):
        if term_fn is not None:
            args = tuple(map_term(a, term_fn) for a in formula.args)
            formula = type(formula)(formula.pred, args)
        return literal_fn(formula)
    if isinstance(formula, FOAnd):
        return conj(map_fo(i, literal_fn, term_fn) for i in formula.items)
    if isinstance(formula, FOOr):
        return disj(map_fo(i, literal_fn, term_fn) for i in formula.items)
    if isinstance(formula, (Exists, ForAll)):
        body = map_fo(formula.body, literal_fn, term_fn)
        if isinstance(body, (FOTrue, FOFalse)):
            return body
        return type(formula)(formula.var, body)
    if isinstance(formula, FONot):
        return FONot(map_fo(formula.body, literal_fn, term_fn))
    return formula


def literals(formula):
    """Iterate over the literals of a first-order formula, in order."""
    if isinstance(formula, LITERALS):
        yield formula
    elif isinstance(formula, (FOAnd, FOOr)):
        for item in formula.items:
            yield from literals(item)
    elif isinstance(formula, (Exists, ForAll, FONot)):
        yield from literals(formula.body)


def literal_terms(literal):
    seen = []
    for arg in literal.args:
        for term in subterms(arg):
            if isinstance(term, STATE_TERMS) and term not in seen:
                seen.append(term)
    return seen


def free_terms(formula):
    """Free variable-like leaves (state, next, indexed and quantified)."""
    if isinstance(formula, LITERALS):
        return set(literal_terms(formula))
    if isinstance(formula, (FOAnd, FOOr)):
        out = set()
        for item in formula.items:
            out |= free_terms(item)
        return out
    if isinstance(formula, (Exists, ForAll)):
        return free_terms(formula.body) - {formula.var}
    if isinstance(formula, FONot):
        return free_terms(formula.body)
    return set()


def is_quantifier_free(formula):
    if isinstance(formula, (Exists, ForAll)):
        return False
    if isinstance(formula, (FOAnd, FOOr)):
        return all(is_quantifier_free(i) for i in formula.items)
    if isinstance(formula, FONot):
        return is_quantifier_free(formula.body)
    return True


def substitute(formula, mapping):
    """Capture-free substitution of leaves; bound variables are never replaced."""
    if not mapping:
        return formula
    if isinstance(formula, (Exists, ForAll)):
        inner = {k: v for k, v in mapping.items() if k != formula.var}
        body = substitute(formula.body, inner)
        if isinstance(body, (FOTrue, FOFalse)):
            return body
        return type(formula)(formula.var, body)
    if isinstance(formula, (FOAnd, FOOr)):
        join = conj if isinstance(formula, FOAnd) else disj
        return join(substitute(i, mapping) for i in formula.items)
    if isinstance(formula, LITERALS):
        args = tuple(map_term(a, lambda t: mapping.get(t, t)) for a in formula.args)
        return type(formula)(formula.pred, args)
    if isinstance(formula, FONot):
        return FONot(substitute(formula.body, mapping))
    return formula


def substitute_last(formula, value):
    """Replace the last-state flag by a Boolean constant and simplify."""
    def replace(literal):
        if literal.pred != LAST_FLAG:
            return literal
        holds = value if isinstance(literal, Atom) else not value
        return TRUE_FO if holds else FALSE_FO
    return map_fo(formula, replace)


# ============================================================================
# STEPPING, L-REWRITING, STEP CONSTRAINTS
# ============================================================================
def stepped(term, i):
    """Stepped version t^(i): state variables to step i, next-references to i+1."""
    def leaf(t):
        if isinstance(t, Var):
            return Indexed(t.name, i, t.sort)
        if isinstance(t, (NextVar, WeakNextVar)):
            return Indexed(t.name, i + 1, t.sort)
        return t
    return map_term(term, leaf)


def step_formula(formula, i):
    return map_fo(formula, lambda lit: lit, lambda t: stepped(t, i))


def l_rewrite(formula):
    """
    Guard next-references by the last-state flag: atoms with a strong next
    become ``l & A``, atoms with only weak nexts become ``l -> B``.
    """
    def rewrite(literal):
        strong = any(has_strong_next(a) for a in literal.args)
        weak = not strong and any(has_weak_next(a) for a in literal.args)
        if isinstance(literal, Atom):
            if strong:
                return conj([LAST, literal])
            if weak:
                return disj([NOT_LAST, literal])
        else:
            if strong:
                return disj([NOT_LAST, literal])
            if weak:
                return conj([LAST, literal])
        return literal
    return map_fo(formula, rewrite)


def omega(constraints):
    """Step-constraint encoding of a sequence of first-order constraints."""
    constraints = list(constraints)
    if not constraints:
        return TRUE_FO
    parts = [step_formula(c, i) for i, c in enumerate(constraints[:-1])]
    last = len(constraints) - 1
    parts.append(step_formula(l_rewrite(constraints[-1]), last))
    return conj(parts)


# ============================================================================
# TEMPORAL FORMULAS
# ============================================================================
class TempFormula:

    @cached_property
    def text(self):
        return self._render()

    def __str__(self):
        return self.text


@dataclass(frozen=True)
class FO(TempFormula):
    fo: FOFormula

    def _render(self):
        return str(self.fo)


@dataclass(frozen=True)
class TTrue(TempFormula):

    def _render(self):
        return "true"


@dataclass(frozen=True)
class And(TempFormula):
    left: TempFormula
    right: TempFormula

    def _render(self):
        return f"({self.left} & {self.right})"


@dataclass(frozen=True)
class Or(TempFormula):
    left: TempFormula
    right: TempFormula

    def _render(self):
        return f"({self.left} | {self.right})"


@dataclass(frozen=True)
class Tomorrow(TempFormula):
    body: TempFormula

    def _render(self):
        return f"X {_paren(self.body)}"


@dataclass(frozen=True)
class WeakTomorrow(TempFormula):
    body: TempFormula

    def _render(self):
        return f"wX {_paren(self.body)}"


@dataclass(frozen=True)
class Until(TempFormula):
    left: TempFormula
    right: TempFormula

    def _render(self):
        if isinstance(self.left, TTrue):
            return f"F {_paren(self.right)}"
        return f"({self.left} U {self.right})"


@dataclass(frozen=True)
class Release(TempFormula):
    left: TempFormula
    right: TempFormula

    def _render(self):
        if self.left == FALSE:
            return f"G {_paren(self.right)}"
        return f"({self.left} R {self.right})"


@dataclass(frozen=True)
class Not(TempFormula):
    """Unrestricted negation; eliminated by ``to_nnf``."""
    body: TempFormula

    def _render(self):
        return f"!{_paren(self.body)}"


TRUE = TTrue()
FALSE = FO(FALSE_FO)
BINARY = (And, Or, Until, Release)


def fo(formula):
    """Lift a first-order formula, normalising truth to the temporal constant."""
    return TRUE if isinstance(formula, FOTrue) else FO(formula)


def finally_(body):
    return Until(TRUE, body)


def globally(body):
    return Release(FALSE, body)


def sort_key(formula):
    return formula.text


def to_nnf(formula):
    """Push negations down to literals using the finite-trace dualities."""
    if isinstance(formula, Not):
        return _negate_temporal(formula.body)
    if isinstance(formula, FO):
        return fo(fo_nnf(formula.fo))
    if isinstance(formula, BINARY):
        return type(formula)(to_nnf(formula.left), to_nnf(formula.right))
    if isinstance(formula, (Tomorrow, WeakTomorrow)):
        return type(formula)(to_nnf(formula.body))
    return formula


def _negate_temporal(formula):
    if isinstance(formula, Not):
        return to_nnf(formula.body)
    if isinstance(formula, FO):
        return fo(negate(fo_nnf(formula.fo)))
    if isinstance(formula, TTrue):
        return FALSE
    if isinstance(formula, And):
        return Or(_negate_temporal(formula.left), _negate_temporal(formula.right))
    if isinstance(formula, Or):
        return And(_negate_temporal(formula.left), _negate_temporal(formula.right))
    if isinstance(formula, Tomorrow):
        return WeakTomorrow(_negate_temporal(formula.body))
    if isinstance(formula, WeakTomorrow):
        return Tomorrow(_negate_temporal(formula.body))
    if isinstance(formula, Until):
        return Release(_negate_temporal(formula.left), _negate_temporal(formula.right))
    if isinstance(formula, Release):
        return Until(_negate_temporal(formula.left), _negate_temporal(formula.right))
    raise TypeError(f"not a temporal formula: {formula!r}")


def children(formula):
    if isinstance(formula, BINARY):
        return (formula.left, formula.right)
    if isinstance(formula, (Tomorrow, WeakTomorrow, Not)):
        return (formula.body,)
    return ()


def subformulas(formula):
    yield formula
    for child in children(formula):
        yield from subformulas(child)


def closure(formula):
    """Subformulas plus X(a U b) for each until and wX(a R b) for each release."""
    out = set()
    for sub in subformulas(formula):
        out.add(sub)
        if isinstance(sub, Until):
            out.add(Tomorrow(sub))
        elif isinstance(sub, Release):
            out.add(WeakTomorrow(sub))
    return out


def temporal_literals(formula):
    for sub in subformulas(formula):
        if isinstance(sub, FO):
            yield from literals(sub.fo)


def iteration_conditions(formula):
    """Literals under the left argument of an until or the right of a release."""
    out = []
    for sub in subformulas(formula):
        if isinstance(sub, Until):
            source = sub.left
        elif isinstance(sub, Release):
            source = sub.right
        else:
            continue
        for lit in temporal_literals(source):
            if lit not in out:
                out.append(lit)
    return out


def walk_fo(formula) -> Iterator[FOFormula]:
    yield formula
    if isinstance(formula, (FOAnd, FOOr)):
        for item in formula.items:
            yield from walk_fo(item)
    elif isinstance(formula, (Exists, ForAll, FONot)):
        yield from walk_fo(formula.body)
