"""
Problem-file frontend
Parses the textual problem format into a Signature and an NNF temporal
formula, and prints formulas back to the surface syntax and to SMT-LIB.

File layout (``#`` starts a comment):

    theory LRA | LIA | EUF
    sort S
    vars x:Real, y:Real
    pred p(S, S)
    func f(S): S
    options prune=off max_steps=20
    formula <formula text up to end of file>
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import pyparsing as pp

from logic.syntax import (
    BOOL, COMPARISONS, FALSE, FALSE_FO, LAST_FLAG, TRUE, TRUE_FO,
    And, App, Atom, Exists, FOAnd, FOFalse, FONot, FOOr, FOTrue, ForAll,
    Indexed, NegAtom, NextVar, Not, Num, Or, QVar, Release, Signature,
    SortError, Theory, Tomorrow, Until, Var, WeakNextVar, WeakTomorrow,
    congruence_modulus, finally_, fo, free_terms, globally, literals, to_nnf,
)

pp.ParserElement.enable_packrat()

KEYWORDS = ("X", "wX", "U", "R", "F", "G", "true", "false", "exists", "forall", "next", "wnext")
BUILTIN_FUNCTIONS = ("mod", "div")


class ParseError(ValueError):
    """Syntax or naming error in a problem file, with a 1-based location."""

    def __init__(self, message, line=None, column=None):
        self.message = message
        self.line = line
        self.column = column
        where = f"{line}:{column}: " if line is not None else ""
        super().__init__(f"{where}{message}")


@dataclass
class Problem:
    signature: Signature
    formula: object
    options: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Raw:
    """Untyped parse-tree node; ``loc`` is an offset into the source text."""
    kind: str
    args: tuple
    loc: int


# ============================================================================
# GRAMMAR
# ============================================================================
def _raw(kind):
    def action(s, loc, toks):
        return Raw(kind, tuple(toks), loc)
    return action


def _level(kind):
    def action(s, loc, toks):
        return Raw(kind, tuple(toks[0]), loc)
    return action


def _build_grammar():
    keyword = pp.MatchFirst([pp.Keyword(k) for k in KEYWORDS])
    ident = (~keyword + pp.Regex(r"[A-Za-z_][A-Za-z0-9_]*")).set_name("identifier")
    lpar, rpar = pp.Suppress("("), pp.Suppress(")")

    number = pp.Regex(r"-?\d+(?:/\d+|\.\d+)?").set_name("number")
    number.set_parse_action(_raw("num"))

    term = pp.Forward()
    next_ref = pp.Suppress(pp.Keyword("next")) + lpar + ident + rpar
    next_ref.set_parse_action(_raw("next"))
    wnext_ref = pp.Suppress(pp.Keyword("wnext")) + lpar + ident + rpar
    wnext_ref.set_parse_action(_raw("wnext"))
    call = ident + lpar + pp.Optional(pp.DelimitedList(term)) + rpar
    call.set_parse_action(_raw("call"))
    name = ident.copy().set_parse_action(_raw("ident"))
    operand = number | next_ref | wnext_ref | call | name

    term <<= pp.infix_notation(operand, [
        (pp.Regex(r"-(?!\d)"), 1, pp.OpAssoc.RIGHT, _level("neg")),
        (pp.Literal("*"), 2, pp.OpAssoc.LEFT, _level("arith")),
        (pp.one_of("+ -"), 2, pp.OpAssoc.LEFT, _level("arith")),
    ])

    cmp_op = pp.Regex(r"=mod\d+|<=|>=|!=|=|<|>").set_name("comparison")
    comparison = term + cmp_op + term
    comparison.set_parse_action(_raw("cmp"))

    formula = pp.Forward()
    quant = (
        (pp.Keyword("exists") | pp.Keyword("forall")) + ident + pp.Suppress(":") + ident
        + pp.Suppress(".") + lpar + formula + rpar
    )
    quant.set_parse_action(_raw("quant"))
    constant = pp.Keyword("true") | pp.Keyword("false")
    constant.set_parse_action(_raw("const"))
    pred = call.copy().set_parse_action(_raw("pred"))
    prop = ident.copy().set_parse_action(_raw("prop"))
    leaf = quant | comparison | constant | pred | prop

    prefix = pp.Literal("!") | pp.Keyword("wX") | pp.Keyword("X") | pp.Keyword("F") | pp.Keyword("G")
    formula <<= pp.infix_notation(leaf, [
        (prefix, 1, pp.OpAssoc.RIGHT, _level("unary")),
        (pp.Literal("&"), 2, pp.OpAssoc.LEFT, _level("and")),
        (pp.Literal("|"), 2, pp.OpAssoc.LEFT, _level("or")),
        (pp.Keyword("U") | pp.Keyword("R"), 2, pp.OpAssoc.RIGHT, _level("temporal")),
    ])
    formula.ignore(pp.Regex(r"#.*"))
    return formula, ident


FORMULA, IDENT = _build_grammar()


def _header_grammar():
    ident = IDENT
    lpar, rpar, colon = pp.Suppress("("), pp.Suppress(")"), pp.Suppress(":")
    sorts = pp.Group(pp.Optional(lpar + pp.Optional(pp.DelimitedList(ident)) + rpar))
    return {
        "theory": pp.one_of("LRA LIA EUF") + pp.StringEnd(),
        "sort": ident + pp.StringEnd(),
        "vars": pp.DelimitedList(pp.Group(ident + colon + ident)) + pp.StringEnd(),
        "pred": ident + sorts + pp.StringEnd(),
        "func": ident + sorts + colon + ident + pp.StringEnd(),
        "options": pp.OneOrMore(pp.Group(ident + pp.Suppress("=") + pp.Regex(r"\S+"))) + pp.StringEnd(),
    }


HEADER = _header_grammar()


# ============================================================================
# TYPED BUILDER
# ============================================================================
class FormulaBuilder:
    """Turns raw parse trees into typed, well-sorted formulas."""

    def __init__(self, signature, source=""):
        self.signature = signature
        self.source = source

    def fail(self, message, loc, kind=SortError):
        if self.source:
            raise kind(message, pp.lineno(loc, self.source), pp.col(loc, self.source))
        raise kind(message)

    # --- terms -------------------------------------------------------------
    def term(self, raw, scope):
        kind, args, loc = raw.kind, raw.args, raw.loc
        sig = self.signature
        arith = sig.theory.arithmetic_sort
        if kind == "num":
            if arith is None:
                self.fail(f"numeral '{args[0]}' in theory {sig.theory.value}", loc)
            value = Fraction(args[0])
            if arith == "Int" and value.denominator != 1:
                self.fail(f"non-integer numeral '{args[0]}' in LIA", loc)
            return Num(value, arith)
        if kind in ("next", "wnext"):
            name = args[0]
            if name in scope:
                self.fail(f"'{name}' is quantified; next-references apply to state variables only", loc)
            if name not in sig.var_sorts:
                self.fail(f"unknown state variable '{name}'", loc, ParseError)
            cls = NextVar if kind == "next" else WeakNextVar
            return cls(name, sig.var_sorts[name])
        if kind == "ident":
            name = args[0]
            if name in scope:
                return scope[name]
            if name in sig.var_sorts:
                return Var(name, sig.var_sorts[name])
            if name in sig.functions:
                params, result = sig.functions[name]
                if params:
                    self.fail(f"function '{name}' expects {len(params)} arguments", loc)
                return App(name, (), result)
            self.fail(f"unknown identifier '{name}'", loc, ParseError)
        if kind == "call":
            name, actual = args[0], [self.term(a, scope) for a in args[1:]]
            if name in BUILTIN_FUNCTIONS:
                if sig.theory.value != "LIA" or len(actual) != 2 or not isinstance(actual[1], Num):
                    self.fail(f"'{name}' takes an Int term and an integer constant (LIA only)", loc)
                self.expect_sort(actual[0], "Int", loc)
                return App(name, tuple(actual), "Int")
            if name not in sig.functions:
                self.fail(f"unknown function '{name}'", loc, ParseError)
            params, result = sig.functions[name]
            self.check_arguments(name, params, actual, loc)
            return App(name, tuple(actual), result)
        if kind == "neg":
            operand = self.term(args[1], scope)
            self.expect_sort(operand, arith, loc)
            return App("-", (operand,), arith)
        if kind == "arith":
            result = self.term(args[0], scope)
            self.expect_sort(result, arith, loc)
            for op, right in zip(args[1::2], args[2::2]):
                other = self.term(right, scope)
                self.expect_sort(other, arith, right.loc)
                result = App(op, (result, other), arith)
            return result
        self.fail(f"expected a term, found {kind}", loc, ParseError)

    def expect_sort(self, term, sort, loc):
        if sort is None or term.sort != sort:
            self.fail(f"term '{term}' has sort {term.sort}, expected {sort or 'an arithmetic sort'}", loc)

    def check_arguments(self, name, params, actual, loc):
        if len(params) != len(actual):
            self.fail(f"'{name}' expects {len(params)} arguments, got {len(actual)}", loc)
        for sort, arg in zip(params, actual):
            self.expect_sort(arg, sort, loc)

    # --- first-order formulas ----------------------------------------------
    def first_order(self, raw, scope):
        kind, args, loc = raw.kind, raw.args, raw.loc
        sig = self.signature
        if kind == "const":
            return TRUE_FO if args[0] == "true" else FALSE_FO
        if kind == "cmp":
            left, op, right = self.term(args[0], scope), args[1], self.term(args[2], scope)
            if left.sort != right.sort:
                self.fail(f"cannot compare {left.sort} with {right.sort}", loc)
            if op in ("=", "!="):
                return Atom("=", (left, right)) if op == "=" else NegAtom("=", (left, right))
            if congruence_modulus(op) is not None:
                if left.sort != "Int" or congruence_modulus(op) < 1:
                    self.fail(f"congruence '{op}' needs Int operands and a positive modulus", loc)
                return Atom(op, (left, right))
            self.expect_sort(left, sig.theory.arithmetic_sort, loc)
            return Atom(op, (left, right))
        if kind in ("pred", "prop"):
            name = args[0]
            if name not in sig.predicates:
                self.fail(f"unknown predicate '{name}'", loc, ParseError)
            actual = [self.term(a, scope) for a in args[1:]]
            self.check_arguments(name, sig.predicates[name], actual, loc)
            return Atom(name, tuple(actual))
        if kind == "quant":
            which, name, sort, body = args
            if name in sig.var_sorts or name in sig.functions or name in sig.predicates:
                self.fail(f"quantified variable '{name}' clashes with a declared symbol", loc, ParseError)
            if name.startswith("__"):
                self.fail(f"reserved name '{name}'", loc, ParseError)
            if sort not in sig.value_sorts:
                self.fail(f"unknown sort '{sort}'", loc)
            var = QVar(name, sort)
            inner = self.first_order(body, {**scope, name: var})
            return Exists(var, inner) if which == "exists" else ForAll(var, inner)
        if kind == "and":
            return FOAnd(tuple(self.first_order(a, scope) for a in args[::2]))
        if kind == "or":
            return FOOr(tuple(self.first_order(a, scope) for a in args[::2]))
        if kind == "unary":
            if args[0] != "!":
                self.fail(f"temporal operator '{args[0]}' inside a quantifier", loc, ParseError)
            return FONot(self.first_order(args[1], scope))
        self.fail("temporal operator inside a quantifier", loc, ParseError)

    # --- temporal formulas -------------------------------------------------
    def temporal(self, raw):
        kind, args = raw.kind, raw.args
        if kind == "const":
            return TRUE if args[0] == "true" else FALSE
        if kind == "unary":
            op, body = args[0], self.temporal(args[1])
            return {
                "!": Not, "X": Tomorrow, "wX": WeakTomorrow, "F": finally_, "G": globally,
            }[op](body)
        if kind in ("and", "or"):
            join = And if kind == "and" else Or
            result = self.temporal(args[0])
            for right in args[2::2]:
                result = join(result, self.temporal(right))
            return result
        if kind == "temporal":
            operands = [self.temporal(a) for a in args[::2]]
            result = operands[-1]
            for op, left in zip(reversed(args[1::2]), reversed(operands[:-1])):
                result = (Until if op == "U" else Release)(left, result)
            return result
        return fo(self.first_order(raw, {}))


# ============================================================================
# PROBLEM FILES
# ============================================================================
def _strip_comment(line):
    return line.split("#", 1)[0]


def _header_error(exc, lineno, offset):
    return ParseError(f"malformed declaration: {exc.msg}", lineno, exc.col + offset)


def load_problem(text, theory_override=None):
    """
    Parse a problem file into a Problem (signature, NNF formula, options).

    ``theory_override`` replaces the theory named by the file, if any.
    """
    theory = Theory.LRA
    sorts, predicates, functions, state_vars, options = [], {}, {}, [], {}
    formula_start = None
    lines = text.splitlines(keepends=True)
    offset = 0
    for lineno, line in enumerate(lines, start=1):
        body = _strip_comment(line)
        stripped = body.strip()
        if not stripped:
            offset += len(line)
            continue
        directive, _, rest = stripped.partition(" ")
        rest = rest.strip()
        if directive == "formula":
            formula_start = offset + line.index("formula") + len("formula")
            break
        if directive not in HEADER:
            raise ParseError(f"unknown directive '{directive}'", lineno, line.index(directive) + 1)
        column = line.index(rest) + 1 if rest else len(line)
        try:
            toks = HEADER[directive].parse_string(rest, parse_all=True)
        except pp.ParseBaseException as exc:
            raise _header_error(exc, lineno, column - 1) from None
        if directive == "theory":
            theory = Theory(toks[0])
        elif directive == "sort":
            sorts.append(toks[0])
        elif directive == "vars":
            state_vars.extend((name, sort) for name, sort in toks)
        elif directive == "pred":
            predicates[toks[0]] = tuple(toks[1])
        elif directive == "func":
            functions[toks[0]] = (tuple(toks[1]), toks[2])
        else:
            options.update({key: value for key, value in toks})
        offset += len(line)

    if formula_start is None:
        raise ParseError("missing 'formula' section", len(lines) or 1, 1)
    if theory_override is not None:
        theory = Theory(theory_override)
    if not state_vars:
        state_vars = list(Signature.minimal(theory).state_vars)
        if theory is Theory.EUF and not sorts:
            sorts = ["U"]
    for builtin in ("Real", "Int", "Bool"):
        if builtin in sorts:
            raise ParseError(f"'{builtin}' is a built-in sort and cannot be declared")
    signature = Signature(theory, tuple(sorts), predicates, functions, tuple(state_vars))
    signature.validate()

    # Blank the header but keep newlines so pyparsing reports true positions.
    masked = "".join(c if c == "\n" else " " for c in text[:formula_start]) + text[formula_start:]
    formula = parse_formula_text(masked, signature, start=formula_start)
    return Problem(signature, formula, options)


def parse_problem(text):
    """Parse a problem file, returning ``(signature, formula)``."""
    problem = load_problem(text)
    return problem.signature, problem.formula


def parse_formula_text(text, signature, start=0):
    if not _strip_all(text[start:]):
        raise ParseError("empty formula", pp.lineno(start, text) if text else 1, 1)
    try:
        raw = FORMULA.parse_string(text, parse_all=True)[0]
    except pp.ParseBaseException as exc:
        raise ParseError(f"syntax error: {exc.msg}", exc.lineno, exc.col) from None
    return to_nnf(FormulaBuilder(signature, text).temporal(raw))


def _strip_all(text):
    return "".join(_strip_comment(line) for line in text.splitlines()).strip()


def parse_formula(text, signature):
    """Parse a bare formula against an existing signature."""
    return parse_formula_text(text, signature)


# ============================================================================
# PRINTERS
# ============================================================================
def print_formula(formula):
    """Surface syntax; ``parse_formula(print_formula(phi))`` returns ``phi``."""
    return str(formula)


SMT_RESERVED = {
    "and", "or", "not", "exists", "forall", "let", "true", "false", "ite", "distinct",
    "mod", "div", "abs", "Real", "Int", "Bool", "par", "_", "!", "as", "assert",
    "declare-fun", "declare-const", "define-fun", "check-sat", "push", "pop", "match",
}


def smt_symbol(name):
    return f"|{name}|" if name in SMT_RESERVED else name


def _smt_number(value):
    value = Fraction(value)
    magnitude = abs(value)
    if magnitude.denominator == 1:
        text = str(magnitude.numerator)
    else:
        text = f"(/ {magnitude.numerator} {magnitude.denominator})"
    return f"(- {text})" if value < 0 else text


def smt_term(term):
    if isinstance(term, Num):
        return _smt_number(term.value)
    if isinstance(term, Indexed):
        return smt_symbol(f"{term.name}@{term.index}")
    if isinstance(term, (Var, QVar)):
        return smt_symbol(term.name)
    if isinstance(term, App):
        if not term.args:
            return smt_symbol(term.fn)
        fn = term.fn if term.fn in ("+", "-", "*", "mod", "div") else smt_symbol(term.fn)
        return f"({fn} {' '.join(smt_term(a) for a in term.args)})"
    raise ValueError(f"next-reference '{term}' must be stepped before SMT rendering")


def print_smt(formula):
    """SMT-LIB 2.6 term syntax for a first-order formula over indexed variables."""
    if isinstance(formula, Atom):
        if formula.pred == LAST_FLAG:
            return LAST_FLAG
        args = [smt_term(a) for a in formula.args]
        modulus = congruence_modulus(formula.pred)
        if modulus is not None:
            return f"(= (mod (- {args[0]} {args[1]}) {modulus}) 0)"
        if not args:
            return smt_symbol(formula.pred)
        pred = formula.pred if formula.pred in COMPARISONS else smt_symbol(formula.pred)
        return f"({pred} {' '.join(args)})"
    if isinstance(formula, NegAtom):
        return f"(not {print_smt(formula.atom)})"
    if isinstance(formula, (FOAnd, FOOr)):
        op = "and" if isinstance(formula, FOAnd) else "or"
        return f"({op} {' '.join(print_smt(i) for i in formula.items)})"
    if isinstance(formula, (Exists, ForAll)):
        q = "exists" if isinstance(formula, Exists) else "forall"
        return f"({q} (({smt_term(formula.var)} {formula.var.sort})) {print_smt(formula.body)})"
    if isinstance(formula, FOTrue):
        return "true"
    if isinstance(formula, FOFalse):
        return "false"
    if isinstance(formula, FONot):
        return f"(not {print_smt(formula.body)})"
    raise TypeError(f"cannot render {formula!r} as SMT-LIB")


def uses_last_flag(formula):
    return any(lit.pred == LAST_FLAG for lit in literals(formula))


def smt_declarations(signature, formulas=(), extra=()):
    """Declarations for the signature plus every free constant of ``formulas``."""
    lines = [f"(declare-sort {smt_symbol(s)} 0)" for s in signature.sorts]
    for name, params in sorted(signature.predicates.items()):
        lines.append(f"(declare-fun {smt_symbol(name)} ({' '.join(params)}) Bool)")
    for name, (params, result) in sorted(signature.functions.items()):
        lines.append(f"(declare-fun {smt_symbol(name)} ({' '.join(params)}) {result})")
    constants, flag = set(extra), False
    for formula in formulas:
        constants |= {t for t in free_terms(formula) if isinstance(t, (Var, Indexed))}
        flag = flag or uses_last_flag(formula)
    for const in sorted(constants, key=lambda t: (t.name, getattr(t, "index", -1))):
        lines.append(f"(declare-const {smt_term(const)} {const.sort})")
    if flag:
        lines.append(f"(declare-const {LAST_FLAG} {BOOL})")
    return lines
