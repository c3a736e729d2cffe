"""
One-pass tree-shaped tableau for LTLf modulo theories
Expansion rules, STEP and the EMPTY / CONTRADICTION / PRUNE termination
rules, best-first search over branches, and witness extraction.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from analysis.semantics import Run, holds
from logic.syntax import (
    FO, NOT_LAST, And, Indexed, Or, Release, TTrue, Tomorrow, Until, WeakTomorrow,
    conj, sort_key,
)
from smt.session import (
    DEFAULT_TIMEOUT_MS, Entailment, SmtStatistics, Sat, Unknown, Unsat, entails,
    make_session,
)
from tableau.history import HistoryBuilder, Poised

log = logging.getLogger(__name__)

STEP_BOUND = "step-bound"
BUDGET = "budget"
BLOCKED = "solver-unknowns-blocked-closure"
REASON_PRIORITY = (BUDGET, STEP_BOUND, BLOCKED)


class TableauError(RuntimeError):
    """Internal inconsistency of the search (a rule applied outside its domain)."""


@dataclass
class TableauConfig:
    prune: bool = True
    max_steps: int = 64
    node_budget: int = 1_000_000
    timeout_ms: int = DEFAULT_TIMEOUT_MS
    solver_cmd: str | None = None
    workers: int = 1
    use_qe: bool = True
    check_exclusion: bool = True
    validate_witness: bool = True


# ============================================================================
# OUTCOMES
# ============================================================================
@dataclass(frozen=True)
class Satisfiable:
    witness: Run
    branch: int


@dataclass(frozen=True)
class Unsatisfiable:
    pass


@dataclass(frozen=True)
class Undetermined:
    reason: str


@dataclass(eq=False)
class Node:
    id: int
    label: frozenset
    parent: Node | None
    steps: int
    previous: Poised | None = None
    entry: Poised | None = None
    status: str = "open"
    rule: str | None = None
    children: list = field(default_factory=list)


# ============================================================================
# RULES
# ============================================================================
def is_elementary(formula):
    return isinstance(formula, (FO, TTrue, Tomorrow, WeakTomorrow))


def is_poised(label):
    return all(is_elementary(f) for f in label)


def expand(label):
    """
    Apply the expansion rule for the least non-elementary member of ``label``.

    Returns one or two child labels.
    """
    candidates = sorted((f for f in label if not is_elementary(f)), key=sort_key)
    if not candidates:
        raise TableauError("expand called on a poised node")
    chosen = candidates[0]
    rest = label - {chosen}
    if isinstance(chosen, And):
        return [rest | {chosen.left, chosen.right}]
    if isinstance(chosen, Or):
        return [rest | {chosen.left}, rest | {chosen.right}]
    if isinstance(chosen, Until):
        return [rest | {chosen.right}, rest | {chosen.left, Tomorrow(chosen)}]
    if isinstance(chosen, Release):
        return [rest | {chosen.left, chosen.right}, rest | {chosen.right, WeakTomorrow(chosen)}]
    raise TableauError(f"no expansion rule for {chosen}")


def step(label):
    """Child label of a poised node: the bodies of its X and wX members."""
    if not is_poised(label):
        raise TableauError("step called on a node that is not poised")
    return frozenset(f.body for f in label if isinstance(f, (Tomorrow, WeakTomorrow)))


def label_constraint(label):
    """Conjunction F(u) of the first-order members of a label."""
    return conj(f.fo for f in sorted(label, key=sort_key) if isinstance(f, FO))


def has_tomorrow(label):
    return any(isinstance(f, Tomorrow) for f in label)


def format_label(label):
    return "{" + ", ".join(str(f) for f in sorted(label, key=sort_key)) + "}"


def branch_frames(entry):
    """Session frames for the non-last poised nodes, and the guarded last constraint."""
    chain = entry.chain
    return [(e, e.step_encoding) for e in chain[:-1]], entry.last_encoding


def witness_terms(signature, length):
    return [Indexed(n, i, s) for i in range(length) for n, s in signature.state_vars]


# ============================================================================
# SEARCH
# ============================================================================
@dataclass
class Decision:
    kind: str
    rule: str | None = None
    model: Sat | None = None
    blocked: bool = False


class Tableau:
    """
    Best-first tableau search keyed by (steps taken, creation order).

    Every worker thread owns two solver sessions: one tracking the current
    branch's step constraints and one kept empty for entailment queries.
    """

    def __init__(self, formula, signature, config=None):
        self.formula = formula
        self.signature = signature
        self.config = config or TableauConfig()
        self.history = HistoryBuilder(signature, self.config.use_qe, self.config.timeout_ms)
        self.smt_stats = SmtStatistics()
        self.nodes = []
        self.reasons = set()
        self.counters = {"expansions": 0, "steps": 0, "empty": 0,
                         "contradiction": 0, "prune": 0, "cut": 0}
        self._local = threading.local()
        self._sessions = []
        self._lock = threading.Lock()
        self._ids = itertools.count()

    # -- sessions ----------------------------------------------------------
    def sessions(self):
        local = self._local
        if not hasattr(local, "branch"):
            cfg = self.config
            local.branch = make_session(self.signature, cfg.solver_cmd, cfg.timeout_ms, self.smt_stats)
            local.query = make_session(self.signature, cfg.solver_cmd, cfg.timeout_ms, self.smt_stats)
            with self._lock:
                self._sessions += [local.branch, local.query]
        return local.branch, local.query

    def close(self):
        for session in self._sessions:
            session.close()
        self._sessions.clear()

    # -- tree ----------------------------------------------------------------
    def new_node(self, label, parent, steps):
        node = Node(next(self._ids), frozenset(label), parent, steps)
        if parent is not None:
            parent.children.append(node)
            node.previous = parent.entry or parent.previous
        if is_poised(node.label):
            node.entry = Poised(steps, node.label, label_constraint(node.label), node.previous, node.id)
        self.nodes.append(node)
        return node

    # -- rules -------------------------------------------------------------
    def rule_empty(self, entry, session):
        if has_tomorrow(entry.label):
            return None
        frames, last = branch_frames(entry)
        session.sync(frames)
        verdict = session.check([last, NOT_LAST], witness_terms(self.signature, entry.index + 1))
        return verdict

    def rule_contradiction(self, entry, session):
        frames, last = branch_frames(entry)
        session.sync(frames)
        return session.check([last])

    def rule_prune(self, entry, query):
        """Earlier equal-label poised node whose history is entailed, most recent first."""
        candidates = [e for e in entry.chain[:-1] if e.label == entry.label]
        if not candidates:
            return None
        current = self.history.history(entry)
        for candidate in reversed(candidates):
            verdict = entails(current, self.history.history(candidate), self.signature, session=query)
            if verdict is Entailment.YES:
                return candidate
            if verdict is Entailment.UNKNOWN:
                log.debug("PRUNE undecided against poised node %d; skipped", candidate.index)
        return None

    def evaluate(self, node):
        """Decide a poised node: accept, reject, cut at the step bound, or step."""
        branch, query = self.sessions()
        entry = node.entry
        blocked = False
        empty = self.rule_empty(entry, branch)
        if isinstance(empty, Sat):
            if self.config.check_exclusion and self.config.prune and self.rule_prune(entry, query):
                raise TableauError(f"EMPTY and PRUNE both apply at node {node.id}")
            return Decision("accept", "EMPTY", empty)
        if isinstance(empty, Unknown):
            blocked = True
        if isinstance(self.rule_contradiction(entry, branch), Unsat):
            return Decision("reject", "CONTRADICTION", blocked=blocked)
        if self.config.prune and self.rule_prune(entry, query) is not None:
            return Decision("reject", "PRUNE", blocked=blocked)
        if entry.index + 1 >= self.config.max_steps:
            return Decision("cut", STEP_BOUND, blocked=blocked)
        return Decision("step", blocked=blocked)

    # -- search ------------------------------------------------------------
    def solve(self):
        cfg = self.config
        root = self.new_node({self.formula}, None, 0)
        frontier = [(0, root.id, root)]
        pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
        batch_size = max(1, cfg.workers)
        try:
            while frontier:
                if len(self.nodes) > cfg.node_budget:
                    log.info("node budget of %d exhausted", cfg.node_budget)
                    self.reasons.add(BUDGET)
                    break
                _, _, node = heapq.heappop(frontier)
                if not is_poised(node.label):
                    node.status = "expanded"
                    self.counters["expansions"] += 1
                    for label in expand(node.label):
                        child = self.new_node(label, node, node.steps)
                        heapq.heappush(frontier, (child.steps, child.id, child))
                    continue
                batch = [node]
                while frontier and len(batch) < batch_size and is_poised(frontier[0][2].label):
                    batch.append(heapq.heappop(frontier)[2])
                decisions = list(pool.map(self.evaluate, batch)) if pool else [self.evaluate(n) for n in batch]
                for item, decision in zip(batch, decisions):
                    outcome = self.apply(item, decision, frontier)
                    if outcome is not None:
                        return outcome
        finally:
            if pool is not None:
                pool.shutdown()
        for reason in REASON_PRIORITY:
            if reason in self.reasons:
                return Undetermined(reason)
        return Unsatisfiable()

    def apply(self, node, decision, frontier):
        if decision.blocked:
            self.reasons.add(BLOCKED)
        if decision.kind == "accept":
            node.status, node.rule = "accepted", decision.rule
            self.counters["empty"] += 1
            run = extract_witness(node.entry, decision.model, self.signature)
            if self.config.validate_witness:
                validate_witness(run, self.formula, self.signature)
            log.info("branch %d accepted after %d steps", node.id, node.entry.index)
            return Satisfiable(run, node.id)
        if decision.kind == "reject":
            node.status, node.rule = "rejected", decision.rule
            self.counters[decision.rule.lower()] += 1
            return None
        if decision.kind == "cut":
            node.status, node.rule = "cut", STEP_BOUND
            self.counters["cut"] += 1
            self.reasons.add(STEP_BOUND)
            return None
        node.status = "stepped"
        self.counters["steps"] += 1
        child = self.new_node(step(node.label), node, node.steps + 1)
        heapq.heappush(frontier, (child.steps, child.id, child))
        return None

    def stats(self):
        out = {"nodes": len(self.nodes), **self.counters,
               "qe_eliminations": self.history.eliminations,
               "qe_fallbacks": self.history.fallbacks}
        out.update(self.smt_stats.snapshot())
        return out


# ============================================================================
# WITNESSES
# ============================================================================
def extract_witness(entry, verdict, signature):
    """Run of length m read off the indexed constants of an EMPTY model."""
    length = entry.index + 1
    states = []
    for i in range(length):
        state = {}
        for name, _ in signature.state_vars:
            key = f"{name}@{i}"
            if key not in verdict.model:
                raise TableauError(f"model has no value for {key}")
            state[name] = verdict.model[key]
        states.append(state)
    return Run(signature, states, verdict.structure)


def validate_witness(run, formula, signature):
    if signature.has_uninterpreted() or signature.sorts:
        if run.structure is None:
            log.debug("witness not validated: model carries no interpretations")
            return
    if not holds(run, 0, formula):
        raise TableauError(f"extracted witness does not satisfy the formula: {run}")
    log.debug("witness validated on %d states", len(run))


def prefixes(formula, length, signature=None, keep_complete=True):
    """
    Enumerate tableau branch prefixes with ``length`` poised nodes.

    Yields lists of poised labels. Branches that can no longer step (no X or
    wX member) before reaching the length are yielded as well when
    ``keep_complete`` is set. Termination rules are not applied.
    """
    stack = [(frozenset({formula}), ())]
    while stack:
        label, poised = stack.pop()
        if not is_poised(label):
            for child in reversed(expand(label)):
                stack.append((child, poised))
            continue
        poised = poised + (label,)
        successor = step(label)
        if len(poised) == length:
            yield list(poised)
        elif not any(isinstance(f, (Tomorrow, WeakTomorrow)) for f in label):
            if keep_complete:
                yield list(poised)
        else:
            stack.append((successor, poised))


# ============================================================================
# MAIN / PUBLIC API
# ============================================================================
def solve(formula, signature, config=None):
    """
    Decide satisfiability of an NNF temporal formula.

    Parameters
    ----------
    formula : TempFormula
    signature : Signature
    config : TableauConfig, optional

    Returns
    -------
    (outcome, tableau)
        ``outcome`` is Satisfiable, Unsatisfiable or Undetermined; the
        tableau is returned for statistics and DOT export.
    """
    tableau = Tableau(formula, signature, config)
    log.info("searching tableau (prune=%s, max_steps=%d, workers=%d)",
             tableau.config.prune, tableau.config.max_steps, tableau.config.workers)
    try:
        outcome = tableau.solve()
    finally:
        tableau.close()
    log.info("tableau finished with %d nodes: %s", len(tableau.nodes), type(outcome).__name__)
    return outcome, tableau
