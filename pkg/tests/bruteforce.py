"""Independent brute-force oracles used by the test suite.

Everything here works by exhaustive enumeration (truth tables, all variable
permutations, full minimax over all experiment instances) and deliberately
shares no machinery with the code paths it checks.
"""
from __future__ import annotations

import itertools
from fractions import Fraction

from cobra.formula import Formula, Variable, evaluate, variables
from cobra.gamemodel import DeductiveGame, ExperimentInstance


def all_valuations(vars_: list[Variable]):
    for bits in itertools.product([False, True], repeat=len(vars_)):
        yield dict(zip(vars_, bits))


def truth_table_models(f: Formula, vars_: list[Variable]) -> list[dict]:
    return [v for v in all_valuations(vars_) if evaluate(f, v)]


def model_set(f: Formula, vars_: list[Variable]) -> frozenset:
    """Models as frozensets of true variables (hashable, order-free)."""
    return frozenset(
        frozenset(x for x, b in v.items() if b)
        for v in truth_table_models(f, vars_))


def brute_fixed(f: Formula, vars_: list[Variable]) -> dict[Variable, bool]:
    models = truth_table_models(f, vars_)
    if not models:
        return {v: False for v in vars_}
    out = {}
    for v in vars_:
        vals = {m[v] for m in models}
        if len(vals) == 1:
            out[v] = vals.pop()
    return out


# ---------------------------------------------------------------------------
# the symmetry-group / equivalence oracle (tiny games only)
# ---------------------------------------------------------------------------

def permute_model_set(ms: frozenset, perm: dict[Variable, Variable]) -> frozenset:
    return frozenset(frozenset(perm[x] for x in m) for m in ms)


class EquivalenceOracle:
    """Exhaustive experiment-equivalence decision for games with at most a
    handful of variables: enumerate every variable permutation, keep those
    mapping each experiment instance to one with semantically equal
    outcomes, then compare update sets under each."""

    def __init__(self, game: DeductiveGame):
        self.game = game
        self.vars = list(game.variables)
        self.instances = list(game.all_instances())
        self.outcome_sets = {
            inst: [model_set(f, self.vars) for f in inst.outcome_formulas()]
            for inst in self.instances}
        self.group = self._symmetry_group()

    def _symmetry_group(self) -> list[dict[Variable, Variable]]:
        group = []
        all_outcome_multisets = []
        for inst in self.instances:
            all_outcome_multisets.append(
                tuple(sorted(self.outcome_sets[inst], key=sorted_key)))
        bag = set(all_outcome_multisets)
        for images in itertools.permutations(self.vars):
            perm = dict(zip(self.vars, images))
            ok = True
            for inst in self.instances:
                moved = tuple(sorted(
                    (permute_model_set(ms, perm) for ms in self.outcome_sets[inst]),
                    key=sorted_key))
                if moved not in bag:
                    ok = False
                    break
            if ok:
                group.append(perm)
        return group

    def updates(self, phi: Formula, inst: ExperimentInstance) -> list[frozenset]:
        phi_models = model_set(phi, self.vars)
        return [phi_models & ms for ms in self.outcome_sets[inst]]

    def equivalent(self, phi: Formula, e1: ExperimentInstance,
                   e2: ExperimentInstance) -> bool:
        left = sorted(self.updates(phi, e1), key=sorted_key)
        u2 = self.updates(phi, e2)
        for perm in self.group:
            right = sorted((permute_model_set(ms, perm) for ms in u2),
                           key=sorted_key)
            if left == right:
                return True
        return False


def sorted_key(ms: frozenset):
    return tuple(sorted(tuple(sorted(x.name for x in m)) for m in ms))


# ---------------------------------------------------------------------------
# exhaustive minimax with no symmetry reduction (oracle for optimal costs)
# ---------------------------------------------------------------------------

def brute_optimal(game: DeductiveGame, mode: str):
    """Optimal worst depth / average cost by plain minimax over every
    experiment instance of the game (results memoized on the exact set of
    remaining codes; no symmetry machinery is involved)."""
    space = game.codespace()
    bundles = [(inst, inst.outcome_masks()) for inst in game.all_instances()]
    memo: dict[int, int] = {}

    def go(mask: int) -> int:
        if mask.bit_count() == 1:
            return 0
        hit = memo.get(mask)
        if hit is not None:
            return hit
        best = None
        for _, ms in bundles:
            parts = [mask & m for m in ms if mask & m]
            if any(p == mask for p in parts):
                continue
            if mode == "worst":
                val = 1 + max(go(p) for p in parts)
            else:
                val = sum(p.bit_count() + go(p) for p in parts)
            if best is None or val < best:
                best = val
        if best is None:
            raise RuntimeError("unsolvable position in the oracle")
        memo[mask] = best
        return best

    total = go(space.full_mask)
    if mode == "worst":
        return total
    return Fraction(total, len(space))
