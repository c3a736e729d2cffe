"""
SMT backend boundary
Solver sessions over the SMT-LIB text protocol (in-process z3 or a child
process), satisfiability and entailment checks, model extraction and
solver-side quantifier elimination.
"""

from __future__ import annotations

import logging
import queue
import shlex
import subprocess
import threading
import time
from abc import ABC, abstractmethod
from contextlib import closing
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

import pyparsing as pp
import z3

from logic.parser import print_smt, smt_declarations, smt_term
from logic.syntax import (
    FALSE_FO, LAST, LAST_FLAG, TRUE_FO, App, Atom, Exists, ForAll, Indexed,
    NegAtom, Num, Var, conj, disj, is_quantifier_free, negate, walk_fo,
)

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT_MS = 5000


class SmtTransportError(RuntimeError):
    """The solver crashed, answered out of protocol, or produced an unusable model."""


class QEFailure(RuntimeError):
    """Quantifier elimination did not produce a quantifier-free formula."""


# ============================================================================
# VERDICTS AND MODELS
# ============================================================================
@dataclass(frozen=True)
class Interpretation:
    """Finite table for a function or predicate symbol, with a default value."""
    entries: dict = field(default_factory=dict)
    default: object = None

    def apply(self, args):
        args = tuple(args)
        if args in self.entries:
            return self.entries[args]
        if self.default is None:
            raise KeyError(args)
        return self.default


@dataclass(frozen=True)
class Structure:
    """First-order structure for the uninterpreted part of a signature."""
    domains: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Sat:
    model: dict = field(default_factory=dict)
    structure: Structure | None = None


@dataclass(frozen=True)
class Unsat:
    pass


@dataclass(frozen=True)
class Unknown:
    reason: str = "unknown"


class Entailment(Enum):
    YES = "yes"
    NO = "no"
    UNKNOWN = "unknown"


class SmtStatistics:
    """Query counters, safe to update from several workers."""

    def __init__(self):
        self._lock = threading.Lock()
        self.reset()

    def reset(self):
        with self._lock:
            self.queries = self.sat = self.unsat = self.unknown = 0
            self.seconds = 0.0

    def record(self, verdict, seconds):
        with self._lock:
            self.queries += 1
            self.seconds += seconds
            if isinstance(verdict, Sat):
                self.sat += 1
            elif isinstance(verdict, Unsat):
                self.unsat += 1
            else:
                self.unknown += 1

    def snapshot(self):
        with self._lock:
            return {
                "smt_queries": self.queries,
                "smt_sat": self.sat,
                "smt_unsat": self.unsat,
                "smt_unknown": self.unknown,
                "smt_seconds": round(self.seconds, 3),
            }


STATISTICS = SmtStatistics()


def constant_name(term):
    """Bare solver-side name of a constant (no SMT-LIB quoting)."""
    if isinstance(term, Indexed):
        return f"{term.name}@{term.index}"
    if isinstance(term, Var):
        return term.name
    if term == LAST:
        return LAST_FLAG
    raise ValueError(f"not a constant: {term}")


# ============================================================================
# SESSIONS
# ============================================================================
class SmtSession(ABC):
    """
    Incremental solver session owned by a single worker.

    ``with session:`` opens a scope that is popped on exit. ``sync`` keeps
    the outermost frames equal to a branch's step constraints.
    """

    name = "abstract"

    def __init__(self, signature, timeout_ms=DEFAULT_TIMEOUT_MS, stats=STATISTICS):
        self.signature = signature
        self.timeout_ms = timeout_ms
        self.stats = stats
        self.depth = 0
        self._frames = []

    @abstractmethod
    def _push(self): raise NotImplementedError

    @abstractmethod
    def _pop(self): raise NotImplementedError

    @abstractmethod
    def _assert(self, formula): raise NotImplementedError

    @abstractmethod
    def _check(self, values): raise NotImplementedError

    def close(self):
        pass

    def push(self):
        self._push()
        self.depth += 1

    def pop(self, count=1):
        if count > self.depth:
            raise SmtTransportError(f"pop({count}) at depth {self.depth}")
        for _ in range(count):
            self._pop()
            self.depth -= 1

    def add(self, formula):
        self._assert(formula)

    def __enter__(self):
        self.push()
        return self

    def __exit__(self, type, value, tb):
        self.pop()

    def sync(self, frames):
        """Make the frame stack equal to ``frames``, a sequence of (key, formula) pairs."""
        common = 0
        for (key, _), current in zip(frames, self._frames):
            if key is not current:
                break
            common += 1
        surplus = len(self._frames) - common
        if surplus:
            self.pop(surplus)
            del self._frames[common:]
        for key, formula in list(frames)[common:]:
            self.push()
            self.add(formula)
            self._frames.append(key)

    def check(self, assumptions=(), values=()):
        """Check the current stack plus ``assumptions``; values are read back on Sat."""
        started = time.perf_counter()
        with self:
            for formula in assumptions:
                self.add(formula)
            verdict = self._check(list(values))
        self.stats.record(verdict, time.perf_counter() - started)
        log.debug("%s check at depth %d: %s", self.name, self.depth, type(verdict).__name__)
        return verdict


def _z3_sort(ctx, sort):
    if sort == "Real":
        return z3.RealSort(ctx)
    if sort == "Int":
        return z3.IntSort(ctx)
    if sort == "Bool":
        return z3.BoolSort(ctx)
    return z3.DeclareSort(sort, ctx)


def z3_value(value):
    """Convert a z3 model value into a Fraction, bool or element name."""
    if z3.is_int_value(value):
        return Fraction(value.as_long())
    if z3.is_rational_value(value):
        return Fraction(value.numerator_as_long(), value.denominator_as_long())
    if z3.is_true(value):
        return True
    if z3.is_false(value):
        return False
    if z3.is_algebraic_value(value):
        raise SmtTransportError(f"irrational model value {value}")
    if z3.is_const(value) and value.decl().kind() == z3.Z3_OP_UNINTERPRETED and \
            z3.is_arith(value):
        raise SmtTransportError(f"non-numeral model value {value}")
    return str(value)


class Z3Session(SmtSession):
    """In-process z3 fed with SMT-LIB text; each session owns its own context."""

    name = "z3"

    def __init__(self, signature, timeout_ms=DEFAULT_TIMEOUT_MS, stats=STATISTICS):
        super().__init__(signature, timeout_ms, stats)
        self.ctx = z3.Context()
        self.solver = self.fresh_solver()
        # scope depths holding a quantified assertion
        self._quantified = []

    def fresh_solver(self):
        solver = z3.Solver(ctx=self.ctx)
        if self.timeout_ms:
            solver.set("timeout", int(self.timeout_ms))
        return solver

    def encode(self, formula):
        script = "\n".join(smt_declarations(self.signature, [formula]))
        try:
            return z3.parse_smt2_string(f"{script}\n(assert {print_smt(formula)})", ctx=self.ctx)[0]
        except z3.Z3Exception as exc:
            raise SmtTransportError(f"z3 rejected query: {exc}") from exc

    def _push(self):
        self.solver.push()

    def _pop(self):
        self.solver.pop()
        self._quantified = [d for d in self._quantified if d < self.depth]

    def _assert(self, formula):
        if not is_quantifier_free(formula):
            self._quantified.append(self.depth)
        self.solver.add(self.encode(formula))

    def check(self, assumptions=(), values=()):
        """Quantified queries run on a fresh scope-free solver holding the current assertions."""
        assumptions = list(assumptions)
        if not self._quantified and all(is_quantifier_free(f) for f in assumptions):
            return super().check(assumptions, values)
        started = time.perf_counter()
        solver = self.fresh_solver()
        solver.add(self.solver.assertions())
        for formula in assumptions:
            solver.add(self.encode(formula))
        verdict = self.verdict(solver, list(values))
        self.stats.record(verdict, time.perf_counter() - started)
        log.debug("z3 scope-free check: %s", type(verdict).__name__)
        return verdict

    def _check(self, values):
        return self.verdict(self.solver, values)

    def verdict(self, solver, values):
        result = solver.check()
        if result == z3.unsat:
            return Unsat()
        if result == z3.unknown:
            reason = solver.reason_unknown() or "unknown"
            return Unknown("timeout" if "timeout" in reason or "canceled" in reason else reason)
        model = solver.model()
        try:
            assignment = {}
            for term in values:
                sort = "Bool" if term == LAST else term.sort
                const = z3.Const(constant_name(term), _z3_sort(self.ctx, sort))
                assignment[constant_name(term)] = z3_value(model.eval(const, model_completion=True))
            return Sat(assignment, self.structure(model, assignment))
        except z3.Z3Exception as exc:
            raise SmtTransportError(f"cannot read z3 model: {exc}") from exc

    def structure(self, model, assignment):
        sig = self.signature
        if not sig.sorts and not sig.has_uninterpreted():
            return None
        domains = {}
        for sort in sig.sorts:
            universe = model.get_universe(_z3_sort(self.ctx, sort)) or []
            domains[sort] = [str(e) for e in universe]
        present = {d.name() for d in model.decls()}
        tables = {}
        symbols = [(n, p, "Bool") for n, p in sig.predicates.items()]
        symbols += [(n, p, r) for n, (p, r) in sig.functions.items()]
        for name, params, result in symbols:
            decl = z3.Function(name, *[_z3_sort(self.ctx, s) for s in params], _z3_sort(self.ctx, result))
            if not params:
                value = z3_value(model.eval(decl(), model_completion=True))
                tables[name] = Interpretation({(): value}, value)
                continue
            interp = model[decl] if name in present else None
            entries, default = {}, None
            if interp is not None:
                for i in range(interp.num_entries()):
                    entry = interp.entry(i)
                    key = tuple(z3_value(entry.arg_value(j)) for j in range(entry.num_args()))
                    entries[key] = z3_value(entry.value())
                try:
                    default = z3_value(interp.else_value())
                except (SmtTransportError, z3.Z3Exception):
                    default = None
            if default is None:
                default = _default_value(result, domains)
            tables[name] = Interpretation(entries, default)
        for sort in sig.sorts:
            seen = set(domains[sort])
            for value in _values_of_sort(sort, sig, assignment, tables):
                if value not in seen:
                    domains[sort].append(value)
                    seen.add(value)
            if not domains[sort]:
                domains[sort].append(f"{sort}!val!0")
        return Structure({k: tuple(v) for k, v in domains.items()}, tables)


def _default_value(sort, domains):
    if sort == "Bool":
        return False
    if sort in ("Int", "Real"):
        return Fraction(0)
    elements = domains.get(sort) or [f"{sort}!val!0"]
    return elements[0]


def _values_of_sort(sort, signature, assignment, tables):
    for name, value in assignment.items():
        base = name.split("@", 1)[0]
        if signature.var_sorts.get(base) == sort:
            yield value
    for name, table in tables.items():
        params, result = signature.functions.get(name, (signature.predicates.get(name, ()), "Bool"))
        for key, value in table.entries.items():
            for param, arg in zip(params, key):
                if param == sort:
                    yield arg
            if result == sort:
                yield value
        if result == sort and table.default is not None:
            yield table.default


class PipeSession(SmtSession):
    """
    SMT-LIB 2.6 over the stdin/stdout of a child solver process.

    Declarations are global so that popping a scope never drops a symbol.
    On a query timeout the child is restarted and the stack replayed.
    """

    name = "pipe"

    def __init__(self, signature, command, timeout_ms=DEFAULT_TIMEOUT_MS, stats=STATISTICS):
        super().__init__(signature, timeout_ms, stats)
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self._declared = []
        self._scopes = [[]]
        self._start()

    def _start(self):
        try:
            self.proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL, text=True, bufsize=1,
            )
        except OSError as exc:
            raise SmtTransportError(f"cannot start solver {self.command!r}: {exc}") from exc
        self._lines = queue.Queue()
        threading.Thread(target=self._pump, args=(self.proc, self._lines), daemon=True).start()
        for option in ("(set-option :print-success false)",
                       "(set-option :produce-models true)",
                       "(set-option :global-declarations true)",
                       f"(set-logic {self.signature.smt_logic(quantified=True)})"):
            self._send(option)
        for line in smt_declarations(self.signature):
            self._send(line)

    @staticmethod
    def _pump(proc, lines):
        for line in proc.stdout:
            lines.put(line)
        lines.put(None)

    def _send(self, command):
        try:
            self.proc.stdin.write(command + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise SmtTransportError(f"solver pipe closed: {exc}") from exc

    def _read(self, timeout):
        """Read one balanced s-expression or atom; None on timeout."""
        text, depth, deadline = "", 0, time.monotonic() + timeout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return None
            try:
                line = self._lines.get(timeout=remaining)
            except queue.Empty:
                return None
            if line is None:
                raise SmtTransportError("solver process exited")
            text += line
            depth += line.count("(") - line.count(")")
            if text.strip() and depth <= 0:
                return text.strip()

    def _restart(self):
        log.warning("solver timed out after %d ms; restarting %s", self.timeout_ms, self.command[0])
        self.close()
        self._start()
        for line in self._declared:
            self._send(line)
        for index, scope in enumerate(self._scopes):
            if index:
                self._send("(push 1)")
            for command in scope:
                self._send(command)

    def _declare(self, formulas, extra=()):
        known = set(smt_declarations(self.signature))
        for line in smt_declarations(self.signature, formulas, extra):
            if line not in known and line not in self._declared:
                self._declared.append(line)
                self._send(line)

    def _push(self):
        self._send("(push 1)")
        self._scopes.append([])

    def _pop(self):
        self._send("(pop 1)")
        self._scopes.pop()

    def _assert(self, formula):
        self._declare([formula])
        command = f"(assert {print_smt(formula)})"
        self._scopes[-1].append(command)
        self._send(command)

    def _check(self, values):
        self._declare([], [v for v in values if v != LAST])
        self._send("(check-sat)")
        answer = self._read(self.timeout_ms / 1000 + 1)
        if answer is None:
            self._restart()
            return Unknown("timeout")
        if answer == "unsat":
            return Unsat()
        if answer == "unknown":
            return Unknown("unknown")
        if answer != "sat":
            raise SmtTransportError(f"unexpected solver answer: {answer}")
        if not values:
            return Sat({})
        self._send(f"(get-value ({' '.join(smt_term(v) if v != LAST else LAST_FLAG for v in values)}))")
        reply = self._read(self.timeout_ms / 1000 + 1)
        if reply is None or reply.startswith("(error"):
            raise SmtTransportError(f"get-value failed: {reply}")
        return Sat(parse_values(reply))

    def close(self):
        if getattr(self, "proc", None) and self.proc.poll() is None:
            try:
                self._send("(exit)")
            except SmtTransportError:
                pass
            self.proc.kill()
            self.proc.wait()


SEXPR = pp.nested_expr()


def _sexpr_value(node):
    if isinstance(node, str):
        if node in ("true", "false"):
            return node == "true"
        try:
            return Fraction(node)
        except ValueError:
            return node.strip("|")
    head = node[0]
    if head == "-" and len(node) == 2:
        return -_sexpr_value(node[1])
    if head == "/" and len(node) == 3:
        return _sexpr_value(node[1]) / _sexpr_value(node[2])
    raise SmtTransportError(f"cannot read model value {node}")


def parse_values(reply):
    """Parse a ``(get-value ...)`` reply into a name -> value map."""
    try:
        pairs = SEXPR.parse_string(reply, parse_all=True).as_list()[0]
    except pp.ParseBaseException as exc:
        raise SmtTransportError(f"malformed get-value reply: {reply}") from exc
    return {str(name).strip("|"): _sexpr_value(value) for name, value in pairs}


def make_session(signature, solver_cmd=None, timeout_ms=DEFAULT_TIMEOUT_MS, stats=STATISTICS):
    if solver_cmd:
        return PipeSession(signature, solver_cmd, timeout_ms, stats)
    return Z3Session(signature, timeout_ms, stats)


# ============================================================================
# FROM Z3 BACK TO FORMULAS
# ============================================================================
class Z3Reader:
    """Reads z3 expressions (QE output) back into first-order formulas."""

    def __init__(self, signature):
        self.signature = signature

    def formula(self, e):
        if z3.is_true(e):
            return TRUE_FO
        if z3.is_false(e):
            return FALSE_FO
        if z3.is_and(e):
            return conj(self.formula(c) for c in e.children())
        if z3.is_or(e):
            return disj(self.formula(c) for c in e.children())
        if z3.is_not(e):
            return negate(self.formula(e.arg(0)))
        if z3.is_implies(e):
            return disj([negate(self.formula(e.arg(0))), self.formula(e.arg(1))])
        if z3.is_quantifier(e):
            raise QEFailure("quantifier left in eliminated formula")
        if z3.is_app_of(e, z3.Z3_OP_ITE):
            cond = self.formula(e.arg(0))
            return disj([conj([cond, self.formula(e.arg(1))]),
                         conj([negate(cond), self.formula(e.arg(2))])])
        if z3.is_eq(e) and z3.is_bool(e.arg(0)):
            a, b = self.formula(e.arg(0)), self.formula(e.arg(1))
            return disj([conj([a, b]), conj([negate(a), negate(b)])])
        if z3.is_distinct(e):
            args = [self.term(c) for c in e.children()]
            return conj(NegAtom("=", (a, b)) for i, a in enumerate(args) for b in args[i + 1:])
        for test, pred in ((z3.is_eq, "="), (z3.is_le, "<="), (z3.is_lt, "<"),
                           (z3.is_ge, ">="), (z3.is_gt, ">")):
            if test(e):
                return Atom(pred, (self.term(e.arg(0)), self.term(e.arg(1))))
        if z3.is_const(e) and e.decl().name() == LAST_FLAG:
            return LAST
        if z3.is_app(e) and e.decl().kind() == z3.Z3_OP_UNINTERPRETED \
                and e.decl().name() in self.signature.predicates:
            return Atom(e.decl().name(), tuple(self.term(c) for c in e.children()))
        raise QEFailure(f"unsupported connective in {e}")

    def sort(self, e):
        if z3.is_int(e):
            return "Int"
        if z3.is_real(e):
            return "Real"
        return e.sort().name()

    def term(self, e):
        sort = self.sort(e)
        if z3.is_int_value(e) or z3.is_rational_value(e):
            return Num(z3_value(e), sort)
        if z3.is_app_of(e, z3.Z3_OP_UMINUS):
            inner = self.term(e.arg(0))
            if isinstance(inner, Num):
                return Num(-inner.value, sort)
            return App("-", (inner,), sort)
        for op, fn in ((z3.Z3_OP_ADD, "+"), (z3.Z3_OP_SUB, "-"), (z3.Z3_OP_MUL, "*")):
            if z3.is_app_of(e, op):
                args = [self.term(c) for c in e.children()]
                result = args[0]
                for arg in args[1:]:
                    result = App(fn, (result, arg), sort)
                return result
        for op, fn in ((z3.Z3_OP_MOD, "mod"), (z3.Z3_OP_IDIV, "div")):
            if z3.is_app_of(e, op):
                return App(fn, (self.term(e.arg(0)), self.term(e.arg(1))), sort)
        if z3.is_app_of(e, z3.Z3_OP_TO_REAL):
            return self.term(e.arg(0))
        if z3.is_app(e) and e.decl().kind() == z3.Z3_OP_UNINTERPRETED:
            name = e.decl().name()
            if e.num_args() == 0:
                return self.constant(name, sort)
            return App(name, tuple(self.term(c) for c in e.children()), sort)
        raise QEFailure(f"unsupported term {e}")

    def constant(self, name, sort):
        base, _, index = name.partition("@")
        if index:
            return Indexed(base, int(index), sort)
        if base in self.signature.var_sorts:
            return Var(base, sort)
        return App(base, (), sort)


def from_z3(expr, signature):
    return Z3Reader(signature).formula(expr)


# ============================================================================
# MAIN / PUBLIC API
# ============================================================================
def check_sat(formula, signature, values=(), solver_cmd=None, timeout_ms=DEFAULT_TIMEOUT_MS):
    """
    One-shot satisfiability check.

    Parameters
    ----------
    formula : FOFormula
        Closed except for indexed constants, state variables and the last flag.
    signature : Signature
    values : iterable of terms
        Constants whose model values are returned on Sat.

    Returns
    -------
    Sat | Unsat | Unknown
    """
    with closing(make_session(signature, solver_cmd, timeout_ms)) as session:
        return session.check([formula], values)


def entails(a, b, signature, session=None, solver_cmd=None, timeout_ms=DEFAULT_TIMEOUT_MS):
    """Decide ``a |= b`` by checking ``a & !b``; unknown verdicts propagate."""
    query = conj([a, negate(b)])
    if session is None:
        verdict = check_sat(query, signature, solver_cmd=solver_cmd, timeout_ms=timeout_ms)
    else:
        verdict = session.check([query])
    if isinstance(verdict, Unsat):
        return Entailment.YES
    if isinstance(verdict, Sat):
        return Entailment.NO
    return Entailment.UNKNOWN


def qe_backend(formula, signature, timeout_ms=DEFAULT_TIMEOUT_MS):
    """
    Eliminate all quantifiers with z3's ``qe`` tactic.

    Raises
    ------
    QEFailure
        When the tactic fails, times out, or leaves a quantifier behind.
    """
    session = Z3Session(signature, timeout_ms, SmtStatistics())
    ctx = session.ctx
    expr = session.encode(formula)
    tactic = z3.Then("qe", "simplify", ctx=ctx)
    if timeout_ms:
        tactic = z3.TryFor(tactic, int(timeout_ms), ctx=ctx)
    goal = z3.Goal(ctx=ctx)
    goal.add(expr)
    try:
        result = tactic(goal).as_expr()
    except z3.Z3Exception as exc:
        raise QEFailure(f"qe tactic failed: {exc}") from exc
    eliminated = from_z3(result, signature)
    if any(isinstance(n, (Exists, ForAll)) for n in walk_fo(eliminated)):
        raise QEFailure("quantifier left in eliminated formula")
    return eliminated


def check_smt_text(script, timeout_ms=DEFAULT_TIMEOUT_MS, stats=STATISTICS):
    """Satisfiability of a self-contained SMT-LIB script of definitions and assertions."""
    started = time.perf_counter()
    ctx = z3.Context()
    solver = z3.Solver(ctx=ctx)
    if timeout_ms:
        solver.set("timeout", int(timeout_ms))
    try:
        solver.add(z3.parse_smt2_string(script, ctx=ctx))
    except z3.Z3Exception as exc:
        raise SmtTransportError(f"z3 rejected query: {exc}") from exc
    result = solver.check()
    if result == z3.sat:
        verdict = Sat()
    elif result == z3.unsat:
        verdict = Unsat()
    else:
        verdict = Unknown(solver.reason_unknown() or "unknown")
    stats.record(verdict, time.perf_counter() - started)
    return verdict
