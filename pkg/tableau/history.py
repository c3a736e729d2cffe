"""
History constraints
Incremental computation of the prefix effect and of the history constraint
h of every poised node on a branch, with quantifier elimination where the
theory allows it.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from functools import cached_property

from logic.syntax import (
    TRUE_FO, Indexed, Theory, Var, conj, exists_, is_quantifier_free,
    l_rewrite, literals, step_formula, substitute,
)
from smt.fourier_motzkin import DnfBlowup, is_mc_literal, qe_mc
from smt.session import DEFAULT_TIMEOUT_MS, QEFailure, SmtTransportError, qe_backend

log = logging.getLogger(__name__)


@dataclass(eq=False)
class Poised:
    """
    One poised node of a branch, linked to the poised node before it.

    ``constraint`` is the conjunction of the first-order members of the
    label. ``prefix`` and ``history`` are filled in lazily by HistoryBuilder.
    """
    index: int
    label: frozenset
    constraint: object
    previous: Poised | None = None
    node_id: int = -1
    prefix: object = None
    history: object = None
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def chain(self):
        out, entry = [], self
        while entry is not None:
            out.append(entry)
            entry = entry.previous
        return out[::-1]

    @cached_property
    def step_encoding(self):
        """C_i stepped to instant i (no last-state guard)."""
        return step_formula(self.constraint, self.index)

    @cached_property
    def last_encoding(self):
        """L(C_i) stepped to instant i."""
        return step_formula(l_rewrite(self.constraint), self.index)


def state_at(signature, index):
    return [Indexed(name, index, sort) for name, sort in signature.state_vars]


class HistoryBuilder:
    """
    Computes h for poised nodes; shared by all workers of one search.

    Prefix effect: ``P_i = exists V^i. (P_{i-1} & C_i^(i))`` over V^{i+1}.
    History: ``h_i = (exists V^i. P_{i-1} & L(C_i)^(i))[V^{i+1} := V]``.
    """

    def __init__(self, signature, use_qe=True, timeout_ms=DEFAULT_TIMEOUT_MS):
        self.signature = signature
        self.use_qe = use_qe
        self.timeout_ms = timeout_ms
        self.eliminations = 0
        self.fallbacks = 0
        self._counter_lock = threading.Lock()

    def count(self, name):
        with self._counter_lock:
            setattr(self, name, getattr(self, name) + 1)

    def eliminate(self, formula, variables):
        """Bind ``variables`` existentially and eliminate quantifiers when possible."""
        formula = exists_(variables, formula)
        if is_quantifier_free(formula) or not self.use_qe:
            return formula
        theory = self.signature.theory
        if theory is Theory.LRA and all(is_mc_literal(l) for l in literals(formula)):
            try:
                self.count("eliminations")
                return qe_mc(formula)
            except DnfBlowup:
                log.debug("qe_mc DNF limit reached; trying backend")
        if theory in (Theory.LRA, Theory.LIA) and not self.signature.has_uninterpreted():
            try:
                self.count("eliminations")
                return qe_backend(formula, self.signature, self.timeout_ms)
            except (QEFailure, SmtTransportError) as exc:
                log.debug("backend QE failed (%s); keeping quantifiers", exc)
        self.count("fallbacks")
        return formula

    def prefix(self, entry):
        if entry is None:
            return TRUE_FO
        pending = []
        while entry is not None and entry.prefix is None:
            pending.append(entry)
            entry = entry.previous
        for item in reversed(pending):
            with item._lock:
                if item.prefix is None:
                    before = item.previous.prefix if item.previous is not None else TRUE_FO
                    body = conj([before, item.step_encoding])
                    item.prefix = self.eliminate(body, state_at(self.signature, item.index))
        return pending[0].prefix if pending else entry.prefix

    def history(self, entry):
        """h(π≤i) for the poised node ``entry``, over state variables and the last flag."""
        if entry.history is not None:
            return entry.history
        before = self.prefix(entry.previous)
        body = self.eliminate(conj([before, entry.last_encoding]),
                              state_at(self.signature, entry.index))
        succ = {Indexed(n, entry.index + 1, s): Var(n, s) for n, s in self.signature.state_vars}
        result = substitute(body, succ)
        with entry._lock:
            entry.history = result
        log.debug("h(%d) = %s", entry.index, result)
        return result


# ============================================================================
# MAIN / PUBLIC API
# ============================================================================
def history_constraint(constraints, signature, use_qe=True):
    """
    h of a sequence of first-order constraints; TRUE for the empty sequence.

    Parameters
    ----------
    constraints : sequence of FOFormula
        C_0 ... C_{m-1}, over state variables and next-references.
    signature : Signature
    use_qe : bool
        Eliminate quantifiers when the theory admits it.
    """
    entry = None
    for index, constraint in enumerate(constraints):
        entry = Poised(index, frozenset(), constraint, entry)
    if entry is None:
        return TRUE_FO
    return HistoryBuilder(signature, use_qe).history(entry)
