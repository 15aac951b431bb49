"""Satisfiability services: SAT decision, exact model counting over the
declared variables, fixed-variable detection and removal.

The backend is a small self-contained CDCL solver (two-literal watching,
first-UIP learning, activity-driven decisions, Luby restarts).  All entry
points take plain formulas; the declared variable set fixes the model space
(variables absent from the formula are still free dimensions).
"""
from __future__ import annotations

import heapq
from typing import Mapping, Sequence

from .formula import (Cnf, Formula, Variable, canonicalize, substitute,
                      to_cnf, variables)

DEFAULT_MODEL_CAP = 1 << 20

UNDEF = -1


class ModelCapExceeded(Exception):
    """Model enumeration hit the configured cap."""


def _widx(lit: int) -> int:
    return (lit << 1) if lit > 0 else ((-lit) << 1) | 1


def _luby(i: int) -> int:
    k = 1
    while (1 << k) - 1 < i + 1:
        k += 1
    while (1 << k) - 1 != i + 1:
        k -= 1
        i -= (1 << k) - 1
    return 1 << (k - 1)


class Solver:
    """CDCL SAT solver over integer literals (DIMACS conventions)."""

    def __init__(self):
        self.nvars = 0
        self.clauses: list[list[int]] = []
        self.watches: list[list[int]] = [[], []]
        self.assign: list[int] = [UNDEF]
        self.level: list[int] = [0]
        self.reason: list[int] = [-1]
        self.saved: list[int] = [0]
        self.activity: list[float] = [0.0]
        self.var_inc = 1.0
        self.trail: list[int] = []
        self.trail_lim: list[int] = []
        self.qhead = 0
        self.ok = True
        self._heap: list[tuple[float, int]] = []
        self._model: list[int] | None = None

    # -- construction ------------------------------------------------------

    def new_var(self) -> int:
        self.nvars += 1
        self.assign.append(UNDEF)
        self.level.append(0)
        self.reason.append(-1)
        self.saved.append(0)
        self.activity.append(0.0)
        self.watches.append([])
        self.watches.append([])
        return self.nvars

    def add_clause(self, lits: Sequence[int]) -> bool:
        """Add a clause; must be called with no decisions outstanding."""
        if not self.ok:
            return False
        self._backtrack(0)
        seen = set()
        clause = []
        for lit in lits:
            if -lit in seen:
                return True  # tautology
            if lit in seen:
                continue
            val = self._value(lit)
            if val == 1:
                return True  # already satisfied at root
            if val == 0:
                continue  # false at root; drop
            seen.add(lit)
            clause.append(lit)
        if not clause:
            self.ok = False
            return False
        if len(clause) == 1:
            self._enqueue(clause[0], -1)
            return True
        cref = len(self.clauses)
        self.clauses.append(clause)
        self.watches[_widx(clause[0])].append(cref)
        self.watches[_widx(clause[1])].append(cref)
        return True

    # -- state helpers -----------------------------------------------------

    def _value(self, lit: int) -> int:
        a = self.assign[abs(lit)]
        if a < 0:
            return UNDEF
        return a if lit > 0 else 1 - a

    def _enqueue(self, lit: int, reason: int) -> None:
        v = abs(lit)
        self.assign[v] = 1 if lit > 0 else 0
        self.level[v] = len(self.trail_lim)
        self.reason[v] = reason
        self.trail.append(lit)

    def _backtrack(self, lvl: int) -> None:
        if len(self.trail_lim) <= lvl:
            return
        bound = self.trail_lim[lvl]
        for lit in reversed(self.trail[bound:]):
            v = abs(lit)
            self.saved[v] = self.assign[v]
            self.assign[v] = UNDEF
            heapq.heappush(self._heap, (-self.activity[v], v))
        del self.trail[bound:]
        del self.trail_lim[lvl:]
        self.qhead = len(self.trail)

    def _bump(self, v: int) -> None:
        self.activity[v] += self.var_inc
        if self.activity[v] > 1e100:
            for i in range(1, self.nvars + 1):
                self.activity[i] *= 1e-100
            self.var_inc *= 1e-100
            self._heap = [(-self.activity[u], u) for u in range(1, self.nvars + 1)
                          if self.assign[u] == UNDEF]
            heapq.heapify(self._heap)
        elif self.assign[v] == UNDEF:
            heapq.heappush(self._heap, (-self.activity[v], v))

    # -- propagation -------------------------------------------------------

    def _propagate(self) -> int:
        while self.qhead < len(self.trail):
            lit = self.trail[self.qhead]
            self.qhead += 1
            false_lit = -lit
            wl = self.watches[_widx(false_lit)]
            i = j = 0
            n = len(wl)
            while i < n:
                cref = wl[i]
                i += 1
                clause = self.clauses[cref]
                if clause[0] == false_lit:
                    clause[0], clause[1] = clause[1], clause[0]
                first = clause[0]
                if self._value(first) == 1:
                    wl[j] = cref
                    j += 1
                    continue
                for idx in range(2, len(clause)):
                    if self._value(clause[idx]) != 0:
                        clause[1], clause[idx] = clause[idx], false_lit
                        self.watches[_widx(clause[1])].append(cref)
                        break
                else:
                    wl[j] = cref
                    j += 1
                    if self._value(first) == 0:
                        while i < n:
                            wl[j] = wl[i]
                            j += 1
                            i += 1
                        del wl[j:]
                        return cref
                    self._enqueue(first, cref)
            del wl[j:]
        return -1

    # -- conflict analysis -------------------------------------------------

    def _analyze(self, confl: int) -> tuple[list[int], int]:
        learnt: list[int] = []
        seen = bytearray(self.nvars + 1)
        counter = 0
        p = 0
        index = len(self.trail)
        cur_level = len(self.trail_lim)
        while True:
            clause = self.clauses[confl]
            for q in clause:
                if p != 0 and q == p:
                    continue
                v = abs(q)
                if not seen[v] and self.level[v] > 0:
                    seen[v] = 1
                    self._bump(v)
                    if self.level[v] >= cur_level:
                        counter += 1
                    else:
                        learnt.append(q)
            while True:
                index -= 1
                p = self.trail[index]
                if seen[abs(p)]:
                    break
            counter -= 1
            if counter == 0:
                break
            confl = self.reason[abs(p)]
            seen[abs(p)] = 0
        learnt.insert(0, -p)
        if len(learnt) == 1:
            return learnt, 0
        # move a maximum-level literal to the second watch position
        max_i = max(range(1, len(learnt)), key=lambda i: self.level[abs(learnt[i])])
        learnt[1], learnt[max_i] = learnt[max_i], learnt[1]
        return learnt, self.level[abs(learnt[1])]

    # -- main search -------------------------------------------------------

    def solve(self, assumptions: Sequence[int] = ()) -> bool:
        if not self.ok:
            return False
        self._backtrack(0)
        if self._propagate() != -1:
            self.ok = False
            return False
        self._heap = [(-self.activity[v], v) for v in range(1, self.nvars + 1)]
        heapq.heapify(self._heap)
        restart_round = 0
        conflicts = 0
        limit = 100 * _luby(restart_round)
        while True:
            confl = self._propagate()
            if confl != -1:
                if not self.trail_lim:
                    self.ok = False
                    return False
                conflicts += 1
                learnt, bt = self._analyze(confl)
                self._backtrack(bt)
                if len(learnt) == 1:
                    self._enqueue(learnt[0], -1)
                else:
                    cref = len(self.clauses)
                    self.clauses.append(learnt)
                    self.watches[_widx(learnt[0])].append(cref)
                    self.watches[_widx(learnt[1])].append(cref)
                    self._enqueue(learnt[0], cref)
                self.var_inc /= 0.95
                if conflicts >= limit:
                    restart_round += 1
                    conflicts = 0
                    limit = 100 * _luby(restart_round)
                    self._backtrack(0)
                continue
            # pick the next decision: pending assumptions first
            decision = 0
            for a in assumptions:
                val = self._value(a)
                if val == 0:
                    return False  # assumption contradicted
                if val == UNDEF:
                    decision = a
                    break
            if decision == 0:
                while self._heap:
                    act, v = heapq.heappop(self._heap)
                    if self.assign[v] == UNDEF and -act == self.activity[v]:
                        decision = v if self.saved[v] == 1 else -v
                        break
                if decision == 0:
                    for v in range(1, self.nvars + 1):
                        if self.assign[v] == UNDEF:
                            decision = v if self.saved[v] == 1 else -v
                            break
            if decision == 0:
                self._model = list(self.assign)
                return True
            self.trail_lim.append(len(self.trail))
            self._enqueue(decision, -1)

    def model(self) -> list[int]:
        if self._model is None:
            raise RuntimeError("no model available; call solve() first")
        return self._model


# ---------------------------------------------------------------------------
# formula-level services
# ---------------------------------------------------------------------------

class FormulaSession:
    """A solver bound to one formula over a declared variable set."""

    def __init__(self, f: Formula, declared: Sequence[Variable] | None = None):
        self.formula = canonicalize(f)
        if declared is None:
            declared = sorted(variables(self.formula))
        self.cnf: Cnf = to_cnf(self.formula, declared)
        self.solver = Solver()
        for _ in range(self.cnf.n_vars):
            self.solver.new_var()
        for clause in self.cnf.clauses:
            self.solver.add_clause(clause)

    @property
    def declared(self) -> tuple[Variable, ...]:
        return self.cnf.variables

    def satisfiable(self, assumptions: Mapping[Variable, bool] | None = None) -> bool:
        lits = []
        if assumptions:
            for v, b in assumptions.items():
                vid = self.cnf.var_ids[v]
                lits.append(vid if b else -vid)
        return self.solver.solve(lits)

    def model(self) -> dict[Variable, bool]:
        m = self.solver.model()
        return {v: m[self.cnf.var_ids[v]] == 1 for v in self.cnf.variables}

    def block(self, model: Mapping[Variable, bool]) -> None:
        """Exclude the given assignment of the declared variables."""
        clause = []
        for v in self.cnf.variables:
            vid = self.cnf.var_ids[v]
            clause.append(-vid if model[v] else vid)
        self.solver.add_clause(clause)


def is_satisfiable(f: Formula, declared: Sequence[Variable] | None = None) -> bool:
    return FormulaSession(f, declared).satisfiable()


def enumerate_models(f: Formula, declared: Sequence[Variable] | None = None,
                     cap: int | None = None) -> list[dict[Variable, bool]]:
    """All models over the declared variables, via blocking clauses.

    The result is sorted by the truth values in declared-variable order, so
    it does not depend on solver internals.
    """
    if cap is None:
        cap = DEFAULT_MODEL_CAP
    session = FormulaSession(f, declared)
    models = []
    while session.satisfiable():
        m = session.model()
        models.append(m)
        if len(models) > cap:
            raise ModelCapExceeded(
                f"more than {cap} models; raise the cap to enumerate this space")
        session.block(m)
    order = session.declared
    models.sort(key=lambda m: tuple(m[v] for v in order))
    return models


def count_models(f: Formula, declared: Sequence[Variable] | None = None,
                 cap: int | None = None) -> int:
    """Exact number of models of f over the declared variable set."""
    if cap is None:
        cap = DEFAULT_MODEL_CAP
    session = FormulaSession(f, declared)
    count = 0
    while session.satisfiable():
        count += 1
        if count > cap:
            raise ModelCapExceeded(
                f"more than {cap} models; raise the cap to count this space")
        session.block(session.model())
    return count


def fixed_variables(f: Formula, declared: Sequence[Variable] | None = None) -> dict[Variable, bool]:
    """Variables taking one value in every model.

    An unsatisfiable formula reports every declared variable as fixed (the
    condition holds vacuously); the reported values are then arbitrary.
    """
    session = FormulaSession(f, declared)
    if not session.satisfiable():
        return {v: False for v in session.declared}
    base = session.model()
    fixed = {}
    for v in session.declared:
        if not session.satisfiable({v: not base[v]}):
            fixed[v] = base[v]
    return fixed


def remove_fixed(f: Formula, declared: Sequence[Variable] | None = None) -> tuple[Formula, dict[Variable, bool]]:
    """Substitute each fixed variable by its forced value and fold constants.

    Restricted to the non-fixed variables, the models of the result are in
    bijection with the models of the input.
    """
    fixed = fixed_variables(f, declared)
    if not fixed:
        return canonicalize(f), fixed
    return substitute(f, fixed), fixed
