"""
Fragment classification
Syntactic membership tests for the decidable fragments (no cross-state
comparisons, F/X-only, quasi-MC, quasi-IPC), dependency graphs over branch
prefixes, and the k-bounded lookback check.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import networkx as nx
import pandas as pd
from networkx.utils import UnionFind

from logic.syntax import (
    App, Atom, Exists, FOAnd, FOOr, ForAll, Indexed, NegAtom, NextVar, Num,
    QVar, Release, TTrue, Theory, Until, Var, WeakNextVar, congruence_modulus,
    iteration_conditions, literals, map_term, omega, step_formula,
    subformulas, subterms, temporal_literals,
)
from smt.fourier_motzkin import is_mc_literal
from smt.session import DEFAULT_TIMEOUT_MS, Unsat, check_sat
from tableau.engine import label_constraint, prefixes

log = logging.getLogger(__name__)

FLAGS = ("ncs", "fx", "quasi_mc", "quasi_ipc", "bl")
VARIABLES = (Var, NextVar, WeakNextVar, QVar)
DEFAULT_PREFIX_BUDGET = 20_000


# ============================================================================
# LITERAL CLASSES
# ============================================================================
def _integer(term):
    return isinstance(term, Num) and term.value.denominator == 1


def _shifted(term):
    """``y``, ``y + d`` or ``y - d`` with y a variable and d an integer."""
    if isinstance(term, VARIABLES):
        return True
    return (
        isinstance(term, App) and term.fn in ("+", "-") and len(term.args) == 2
        and isinstance(term.args[0], VARIABLES) and _integer(term.args[1])
    )


def is_ipc_literal(literal):
    """
    Integer periodicity constraint: ``x = y``, ``x op d`` for an integer d,
    or ``x =modK y + d``. Negations of these are accepted too.
    """
    if len(literal.args) != 2:
        return False
    a, b = literal.args
    if congruence_modulus(literal.pred) is not None:
        return (isinstance(a, VARIABLES) and (_shifted(b) or _integer(b))) or \
            (isinstance(b, VARIABLES) and (_shifted(a) or _integer(a)))
    if literal.pred == "=" and isinstance(a, VARIABLES) and isinstance(b, VARIABLES):
        return True
    if literal.pred in ("=", "<", ">", "<=", ">="):
        return (isinstance(a, VARIABLES) and _integer(b)) or (_integer(a) and isinstance(b, VARIABLES))
    return False


def has_next(literal):
    return any(isinstance(t, (NextVar, WeakNextVar)) for a in literal.args for t in subterms(a))


# ============================================================================
# REPORT
# ============================================================================
@dataclass
class BoundedLookback:
    """Outcome of a k-bounded lookback check; ``holds`` is None when the budget ran out."""
    k: int
    holds: bool | None
    path: list = field(default_factory=list)
    reason: str = ""

    @property
    def length(self):
        return max(len(self.path) - 1, 0)

    def to_dict(self):
        out = {"k": self.k, "holds": self.holds}
        if self.holds is False:
            out.update(path=self.path, length=self.length)
        elif self.holds is None:
            out["reason"] = self.reason
        return out

    def __str__(self):
        if self.holds:
            return f"{self.k}-bounded lookback holds"
        if self.holds is None:
            return f"{self.k}-bounded lookback not decided ({self.reason})"
        return f"no {self.k}-bounded lookback: path of length {self.length}: {' - '.join(self.path)}"


@dataclass
class FragmentReport:
    ncs: bool
    fx: bool
    quasi_mc: bool
    quasi_ipc: bool
    bl: BoundedLookback | None = None
    details: dict = field(default_factory=dict)
    evidence: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "ncs": self.ncs,
            "fx": self.fx,
            "quasi_mc": self.quasi_mc,
            "quasi_ipc": self.quasi_ipc,
            "bl": self.bl.to_dict() if self.bl is not None else "not_checked",
            "details": dict(self.details),
            "evidence": dict(self.evidence),
        }

    def to_frame(self):
        rows = []
        for flag in FLAGS:
            if flag == "bl":
                value = "not checked" if self.bl is None else self.bl.holds
            else:
                value = getattr(self, flag)
            rows.append({"fragment": flag, "member": value, "evidence": self.evidence.get(flag, "")})
        for name, value in self.details.items():
            rows.append({"fragment": name, "member": value, "evidence": self.evidence.get(name, "")})
        return pd.DataFrame(rows, columns=["fragment", "member", "evidence"])


class FragmentClassifier:

    def __init__(self, formula, signature):
        self.formula = formula
        self.signature = signature
        self.evidence = {}

    def first(self, flag, items, describe=str):
        for item in items:
            self.evidence[flag] = describe(item)
            return False
        return True

    def classify(self):
        phi = self.formula
        all_literals = list(dict.fromkeys(temporal_literals(phi)))
        conditions = iteration_conditions(phi)

        ncs = self.first("ncs", (l for l in all_literals if has_next(l)),
                         lambda l: f"next-reference in {l}")
        fx = self.first("fx", (s for s in subformulas(phi)
                               if isinstance(s, Release)
                               or (isinstance(s, Until) and not isinstance(s.left, TTrue))),
                        lambda s: f"operator outside F/X/wX: {s}")
        quasi_mc = self.arithmetic("quasi_mc", Theory.LRA, conditions, is_mc_literal)
        quasi_ipc = self.arithmetic("quasi_ipc", Theory.LIA, conditions, is_ipc_literal)
        details = {
            "mc": self.arithmetic("mc", Theory.LRA, all_literals, is_mc_literal),
            "ipc": self.arithmetic("ipc", Theory.LIA, all_literals, is_ipc_literal),
        }
        return FragmentReport(ncs, fx, quasi_mc, quasi_ipc, None, details, dict(self.evidence))

    def arithmetic(self, flag, theory, items, test):
        if self.signature.theory is not theory or self.signature.has_uninterpreted():
            self.evidence[flag] = f"requires theory {theory.value} without uninterpreted symbols"
            return False
        return self.first(flag, (l for l in items if not test(l)),
                          lambda l: f"literal {l} is not {'an MC' if theory is Theory.LRA else 'an IPC'}")


# ============================================================================
# DEPENDENCY GRAPHS
# ============================================================================
@dataclass
class DependencyGraph:
    """
    Variables V^0..V^n with equality and non-equality dependency edges, and
    the graph obtained by contracting each equality class to its least member.
    """
    nodes: list
    eq_edges: set
    neq_edges: set
    representative: dict

    @property
    def graph(self):
        g = nx.Graph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from(tuple(e) for e in self.eq_edges)
        g.add_edges_from(tuple(e) for e in self.neq_edges)
        return g

    @property
    def collapsed(self):
        g = nx.Graph()
        g.add_nodes_from(sorted(set(self.representative.values()), key=_node_key))
        for edge in self.neq_edges:
            a, b = (self.representative[v] for v in edge)
            if a != b:
                g.add_edge(a, b)
        return g


def _node_key(term):
    return (term.name, term.index)


def _uniquify(formula, counter, scope=None):
    """Give every binder a fresh variable so that chains never mix scopes."""
    scope = scope or {}
    if isinstance(formula, (Exists, ForAll)):
        fresh = QVar(f"{formula.var.name}'{next(counter)}", formula.var.sort)
        return type(formula)(fresh, _uniquify(formula.body, counter, {**scope, formula.var: fresh}))
    if isinstance(formula, (FOAnd, FOOr)):
        return type(formula)(tuple(_uniquify(i, counter, scope) for i in formula.items))
    if isinstance(formula, (Atom, NegAtom)):
        args = tuple(map_term(a, lambda t: scope.get(t, t)) for a in formula.args)
        return type(formula)(formula.pred, args)
    return formula


def _mentions(literal):
    return {t for a in literal.args for t in subterms(a) if isinstance(t, (Indexed, QVar))}


def _is_equality(literal):
    return (
        isinstance(literal, Atom) and literal.pred == "="
        and all(isinstance(a, (Indexed, QVar)) for a in literal.args)
    )


def dependency_graph(constraints, signature):
    constraints = list(constraints)
    n = len(constraints)
    nodes = [Indexed(name, i, sort) for i in range(n + 1) for name, sort in signature.state_vars]
    encoded = _uniquify(omega(constraints), itertools.count())
    lits = [l for l in literals(encoded) if _mentions(l)]

    # literals sharing a quantified variable form one dependency chain
    chains = UnionFind(range(len(lits)))
    by_binder = {}
    for index, lit in enumerate(lits):
        for var in _mentions(lit):
            if isinstance(var, QVar):
                by_binder.setdefault(var, []).append(index)
    for members in by_binder.values():
        chains.union(*members)

    classes = UnionFind(nodes)
    neq = set()
    for group in chains.to_sets():
        group = [lits[i] for i in group]
        variables = sorted({v for l in group for v in _mentions(l) if isinstance(v, Indexed)}, key=_node_key)
        equality = all(_is_equality(l) for l in group)
        for a, b in itertools.combinations(variables, 2):
            if equality:
                classes.union(a, b)
            else:
                neq.add(frozenset((a, b)))

    eq, representative = set(), {}
    for group in classes.to_sets():
        members = sorted(group, key=_node_key)
        for v in members:
            representative[v] = members[0]
        eq |= {frozenset(p) for p in itertools.combinations(members, 2)}
    return DependencyGraph(nodes, eq, neq, representative)


def longest_path(graph, limit=None):
    """
    Longest simple path (as a node list) of an undirected graph, by DFS with
    a component-size bound. Exact when ``limit`` is None.
    """
    best = []
    for component in sorted(nx.connected_components(graph), key=len, reverse=True):
        if len(component) <= len(best):
            break
        sub = graph.subgraph(component)
        for start in sorted(component, key=str):
            stack = [(start, [start], {start})]
            while stack:
                node, path, seen = stack.pop()
                if len(path) > len(best):
                    best = path
                    if len(best) == len(component):
                        break
                if limit is not None and len(path) > limit:
                    continue
                for succ in sorted(sub.neighbors(node), key=str, reverse=True):
                    if succ not in seen:
                        stack.append((succ, path + [succ], seen | {succ}))
            if len(best) == len(component):
                break
    return best


class LookbackChecker:
    """Enumerates branch prefixes and searches their collapsed graphs for long paths."""

    def __init__(self, formula, signature, budget=DEFAULT_PREFIX_BUDGET, timeout_ms=DEFAULT_TIMEOUT_MS):
        self.formula = formula
        self.signature = signature
        self.budget = budget
        self.timeout_ms = timeout_ms
        self._consistent = {}

    def consistent(self, label):
        """Local satisfiability of a label's own constraint."""
        if label not in self._consistent:
            constraint = step_formula(label_constraint(label), 0)
            verdict = check_sat(constraint, self.signature, timeout_ms=self.timeout_ms)
            self._consistent[label] = not isinstance(verdict, Unsat)
        return self._consistent[label]

    def check(self, k):
        worst, seen = None, set()
        for count, labels in enumerate(prefixes(self.formula, k + 1)):
            if count >= self.budget:
                log.info("lookback check stopped after %d prefixes", count)
                partial = worst.path if worst else []
                return BoundedLookback(k, None, partial, "budget")
            key = tuple(labels)
            if key in seen or not all(self.consistent(l) for l in labels):
                continue
            seen.add(key)
            graph = dependency_graph([label_constraint(l) for l in labels], self.signature)
            path = longest_path(graph.collapsed)
            if len(path) - 1 > k and (worst is None or len(path) > len(worst.path)):
                worst = BoundedLookback(k, False, [str(v) for v in path])
        return worst or BoundedLookback(k, True)


# ============================================================================
# MAIN / PUBLIC API
# ============================================================================
def classify(formula, signature, check_bl=None, **kwargs):
    """
    Classify a formula into the decidable fragments.

    Parameters
    ----------
    formula : TempFormula
        NNF formula.
    signature : Signature
    check_bl : int, optional
        When given, also decide k-bounded lookback for this k.

    Returns
    -------
    FragmentReport
    """
    report = FragmentClassifier(formula, signature).classify()
    if check_bl is not None:
        report.bl = check_k_bl(formula, signature, check_bl, **kwargs)
        if report.bl.holds is False:
            report.evidence["bl"] = str(report.bl)
    return report


def build_dg(constraints, signature):
    """Dependency graph of the step-constraint encoding of ``constraints``."""
    return dependency_graph(constraints, signature)


def longest_acyclic_path(graph):
    """Number of edges on a longest simple path of ``graph``."""
    return max(len(longest_path(graph)) - 1, 0)


def check_k_bl(formula, signature, k, budget=DEFAULT_PREFIX_BUDGET, timeout_ms=DEFAULT_TIMEOUT_MS):
    """Decide k-bounded lookback over the branch prefixes with k+1 poised nodes."""
    if k < 0:
        raise ValueError("k must be non-negative")
    return LookbackChecker(formula, signature, budget, timeout_ms).check(k)
