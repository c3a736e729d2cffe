"""
Trace files
Text codec for runs: one line per state plus optional domain and
interpretation lines for uninterpreted sorts and symbols.

    # comment
    domain S: e0 e1
    interp p(e0)=true
    interp f(e0)=e1
    interp f(*)=e0          # default value
    x=-1 y=0
    x=1/2 y=1
"""

from __future__ import annotations

from fractions import Fraction

import pyparsing as pp

from analysis.semantics import Run
from logic.syntax import RESERVED_PREFIX, format_number
from smt.session import Interpretation, Structure


class TraceFormatError(ValueError):
    """Malformed trace file, with the 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


IDENT = pp.Regex(r"[A-Za-z_][A-Za-z0-9_]*")
VALUE = pp.Regex(r"[^\s=(),#:*]+")
DOMAIN = pp.Suppress(pp.Keyword("domain")) + IDENT + pp.Suppress(":") + pp.Group(pp.ZeroOrMore(VALUE))
INTERP = (
    pp.Suppress(pp.Keyword("interp")) + IDENT
    + pp.Group(pp.Optional(pp.Suppress("(") + pp.DelimitedList(VALUE | pp.Literal("*")) + pp.Suppress(")")))
    + pp.Suppress("=") + VALUE
)
STATE = pp.OneOrMore(pp.Group(IDENT + pp.Suppress("=") + VALUE))


class TraceReader:

    def __init__(self, signature):
        self.signature = signature
        self.domains = {}
        self.entries = {}
        self.defaults = {}
        self.states = []

    def value(self, token, sort, lineno):
        if sort in ("Real", "Int"):
            try:
                value = Fraction(token)
            except (ValueError, ZeroDivisionError):
                raise TraceFormatError(f"'{token}' is not a number", lineno) from None
            if sort == "Int" and value.denominator != 1:
                raise TraceFormatError(f"'{token}' is not an integer", lineno)
            return value
        if sort == "Bool":
            if token not in ("true", "false"):
                raise TraceFormatError(f"'{token}' is not a Boolean", lineno)
            return token == "true"
        if sort in self.domains and token not in self.domains[sort]:
            raise TraceFormatError(f"'{token}' is not an element of {sort}", lineno)
        return token

    def symbol(self, name, lineno):
        sig = self.signature
        if name in sig.predicates:
            return sig.predicates[name], "Bool"
        if name in sig.functions:
            return sig.functions[name]
        raise TraceFormatError(f"unknown symbol '{name}'", lineno)

    def line(self, text, lineno):
        stripped = text.split("#", 1)[0].strip()
        if not stripped:
            return
        try:
            if stripped.startswith("domain "):
                sort, elements = DOMAIN.parse_string(stripped, parse_all=True)
                if sort not in self.signature.sorts:
                    raise TraceFormatError(f"unknown sort '{sort}'", lineno)
                self.domains[sort] = list(elements)
            elif stripped.startswith("interp "):
                name, args, result = INTERP.parse_string(stripped, parse_all=True)
                params, result_sort = self.symbol(name, lineno)
                value = self.value(result, result_sort, lineno)
                if list(args) == ["*"]:
                    self.defaults[name] = value
                    return
                if len(args) != len(params):
                    raise TraceFormatError(f"'{name}' expects {len(params)} arguments", lineno)
                key = tuple(self.value(a, s, lineno) for a, s in zip(args, params))
                self.entries.setdefault(name, {})[key] = value
            else:
                state = {}
                for name, token in STATE.parse_string(stripped, parse_all=True):
                    if name not in self.signature.var_sorts:
                        raise TraceFormatError(f"unknown state variable '{name}'", lineno)
                    state[name] = self.value(token, self.signature.var_sorts[name], lineno)
                self.states.append(self.complete(state, lineno))
        except pp.ParseBaseException as exc:
            raise TraceFormatError(f"cannot parse '{stripped}': {exc.msg}", lineno) from None

    def complete(self, state, lineno):
        for name, sort in self.signature.state_vars:
            if name in state:
                continue
            if not name.startswith(RESERVED_PREFIX):
                raise TraceFormatError(f"no value for '{name}'", lineno)
            state[name] = self.placeholder(sort)
        return state

    def placeholder(self, sort):
        if sort in ("Real", "Int"):
            return Fraction(0)
        elements = self.domains.setdefault(sort, [])
        if not elements:
            elements.append(f"{sort}0")
        return elements[0]

    def structure(self):
        sig = self.signature
        if not sig.sorts and not sig.has_uninterpreted():
            return None
        domains = {s: tuple(self.domains.get(s, ())) for s in sig.sorts}
        tables = {}
        for name in sig.predicates:
            tables[name] = Interpretation(self.entries.get(name, {}), self.defaults.get(name, False))
        for name in sig.functions:
            tables[name] = Interpretation(self.entries.get(name, {}), self.defaults.get(name))
        return Structure(domains, tables)


def format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Fraction):
        return format_number(value)
    return str(value)


# ============================================================================
# MAIN / PUBLIC API
# ============================================================================
def read_trace(text, signature):
    """
    Parse a trace file into a Run over ``signature``.

    Raises
    ------
    TraceFormatError
        On syntax errors, unknown names, ill-sorted values or an empty trace.
    """
    reader = TraceReader(signature)
    for lineno, line in enumerate(text.splitlines(), start=1):
        reader.line(line, lineno)
    if not reader.states:
        raise TraceFormatError("trace has no states")
    return Run(signature, reader.states, reader.structure())


def write_trace(run):
    """Render a run in the trace format; ``read_trace`` reads it back."""
    lines = []
    structure = run.structure
    if structure is not None:
        for sort, elements in structure.domains.items():
            lines.append(f"domain {sort}: {' '.join(elements)}")
        for name, table in structure.tables.items():
            for key, value in table.entries.items():
                args = f"({', '.join(format_value(a) for a in key)})" if key else ""
                lines.append(f"interp {name}{args}={format_value(value)}")
            if table.default is not None:
                lines.append(f"interp {name}(*)={format_value(table.default)}")
    names = [n for n in run.signature.var_names if not n.startswith(RESERVED_PREFIX)]
    names = names or run.signature.var_names
    for state in run.states:
        lines.append(" ".join(f"{n}={format_value(state[n])}" for n in names))
    return "\n".join(lines) + "\n"
