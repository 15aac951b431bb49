"""Strategy synthesis: ranking strategies and provably optimal worst- or
average-case strategies.

The optimal search is a branch-and-bound recursion over accumulated
knowledge.  Costs are kept as integers throughout: the worst case counts
experiments on the deepest path, the average case tracks the *total* number
of experiments summed over all codes (divide by the code count at the end).
Results are cached twice: by the exact set of remaining codes, and by the
canonical form of the knowledge graph so that symmetric knowledge reuses
one computation (every such reuse is certified before being trusted).
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

from . import satcore, symmetry
from .formula import Formula, Variable, and_, canonicalize, variables
from .gamemodel import (DeductiveGame, EvaluatedExperiment,
                        ExperimentInstance, GameError, IllFormedGameError,
                        Valuation, evaluate_experiment)

INF = float("inf")

RANKINGS = ("max-models", "exp-models", "ent-models", "parts",
            "min-fixed", "exp-fixed")


class SynthError(GameError):
    pass


class UndefinedRankError(SynthError):
    pass


class UnsolvableGameError(SynthError):
    pass


class NonTerminatingStrategyError(SynthError):
    pass


class MalformedTreeError(SynthError):
    pass


# ---------------------------------------------------------------------------
# knowledge
# ---------------------------------------------------------------------------

@dataclass
class Knowledge:
    """Accumulated knowledge: the running conjunction and its code set."""
    game: DeductiveGame
    formula: Formula
    mask: int

    @classmethod
    def initial(cls, game: DeductiveGame) -> "Knowledge":
        space = game.codespace()
        return cls(game, canonicalize(game.phi0), space.full_mask)

    @property
    def model_count(self) -> int:
        return self.mask.bit_count()

    def fixed(self) -> dict[Variable, bool]:
        return self.game.codespace().fixed_from_mask(self.mask)

    def cache_key(self):
        space = self.game.codespace()
        g = symmetry.knowledge_graph(self.game, self.formula, self.fixed())
        return symmetry.canonical_key(g)

    def extend(self, evaluated: EvaluatedExperiment) -> "Knowledge":
        xi = evaluated.instance.outcome_formulas()[evaluated.outcome_index]
        f = canonicalize(and_([self.formula, xi]))
        m = self.mask & evaluated.instance.outcome_masks()[evaluated.outcome_index]
        return Knowledge(self.game, f, m)


def updates(game: DeductiveGame, phi: Formula,
            inst: ExperimentInstance) -> list[Formula]:
    """One canonical conjunction per outcome (unsatisfiable ones included)."""
    phi = canonicalize(phi)
    return [canonicalize(and_([phi, xi])) for xi in inst.outcome_formulas()]


# ---------------------------------------------------------------------------
# ranking functions
# ---------------------------------------------------------------------------

def _rank_from_stats(kind: str, counts: Sequence[int], fixes: Sequence[int]):
    total = sum(counts)
    if kind == "max-models":
        return max(counts)
    if kind == "parts":
        return -sum(1 for c in counts if c > 0)
    if kind == "min-fixed":
        return -min(fixes)
    if total == 0:
        raise UndefinedRankError(f"{kind} is undefined when every member is unsatisfiable")
    if kind == "exp-models":
        return Fraction(sum(c * c for c in counts), total)
    if kind == "ent-models":
        return sum((c / total) * math.log(c / total) for c in counts if c > 0)
    if kind == "exp-fixed":
        return -Fraction(sum(c * f for c, f in zip(counts, fixes)), total)
    raise ValueError(f"unknown ranking function {kind!r}")


def rank(game: DeductiveGame, kind: str, formulas: Sequence[Formula]):
    """Rank a nonempty update set; computed from first principles with the
    satisfiability backend (the tree builders use the code-mask fast path,
    which must agree)."""
    if not formulas:
        raise UndefinedRankError("cannot rank an empty update set")
    counts = [satcore.count_models(f, game.variables) for f in formulas]
    fixes = [len(satcore.fixed_variables(f, game.variables)) for f in formulas]
    return _rank_from_stats(kind, counts, fixes)


def _mask_rank(kind: str, space, masks: Sequence[int]):
    counts = [m.bit_count() for m in masks]
    if kind in ("min-fixed", "exp-fixed"):
        fixes = [len(space.fixed_from_mask(m)) for m in masks]
    else:
        fixes = [0] * len(masks)
    return _rank_from_stats(kind, counts, fixes)


# ---------------------------------------------------------------------------
# decision trees
# ---------------------------------------------------------------------------

@dataclass
class TreeNode:
    mask: int
    instance: ExperimentInstance | None = None
    children: dict[int, "TreeNode"] = field(default_factory=dict)
    valuation: Valuation | None = None
    phase1_size: int | None = None
    phase2_size: int | None = None

    @property
    def is_leaf(self) -> bool:
        return self.valuation is not None


@dataclass
class DecisionTree:
    game: DeductiveGame
    root: TreeNode
    strategy: str

    def internal_nodes(self) -> Iterable[tuple[int, TreeNode]]:
        stack = [(0, self.root)]
        while stack:
            depth, node = stack.pop()
            if node.is_leaf:
                continue
            yield depth, node
            for child in node.children.values():
                stack.append((depth + 1, child))


@dataclass
class ComplexityReport:
    worst: int
    avg: Fraction

    def avg_str(self, places: int = 5) -> str:
        return round_half_up(self.avg, places)

    def __str__(self):
        return f"avg {self.avg_str()} worst {self.worst}"


def round_half_up(x: Fraction, places: int = 5) -> str:
    q = 10 ** places
    scaled = x * q
    n = scaled.numerator // scaled.denominator
    rem = scaled - n
    if rem * 2 >= 1:
        n += 1
    sign = "-" if n < 0 else ""
    n = abs(n)
    return f"{sign}{n // q}.{n % q:0{places}d}"


def eval_complexity(game: DeductiveGame, tree: DecisionTree) -> ComplexityReport:
    """Worst = deepest leaf; avg = mean number of experiments over all codes.
    The leaves must partition the code space."""
    space = game.codespace()
    total = 0
    worst = 0
    seen = 0
    stack = [(0, tree.root)]
    while stack:
        depth, node = stack.pop()
        if node.is_leaf:
            if node.mask.bit_count() != 1:
                raise MalformedTreeError("leaf does not identify a unique code")
            if seen & node.mask:
                raise MalformedTreeError("leaves overlap")
            seen |= node.mask
            total += depth
            worst = max(worst, depth)
            continue
        covered = 0
        for child in node.children.values():
            covered |= child.mask
            stack.append((depth + 1, child))
        if covered != node.mask:
            raise MalformedTreeError("children do not cover their parent")
    if seen != space.full_mask:
        raise MalformedTreeError("leaves do not cover the code space")
    n = len(space)
    return ComplexityReport(worst, Fraction(total, n))


def simulate_play(game: DeductiveGame, tree: DecisionTree,
                  secret: Valuation) -> list[EvaluatedExperiment]:
    """Walk the tree against a secret code; the reached leaf must equal it."""
    space = game.codespace()
    space.mask_of_valuation(secret)  # raises if the secret is not a code
    node = tree.root
    history: list[EvaluatedExperiment] = []
    while not node.is_leaf:
        ev = evaluate_experiment(game, node.instance, secret)
        history.append(ev)
        child = node.children.get(ev.outcome_index)
        if child is None:
            raise MalformedTreeError(
                f"no branch for outcome {ev.outcome_label} of {node.instance.label}")
        node = child
    if node.valuation != secret:
        raise MalformedTreeError("simulation reached a leaf for a different code")
    return history


# ---------------------------------------------------------------------------
# ranking-strategy trees
# ---------------------------------------------------------------------------

def build_ranking_tree(game: DeductiveGame, kind: str,
                       max_depth: int | None = None) -> DecisionTree:
    """Expand the ranking strategy top-down: at every node the candidate set
    is the symmetry-reduced experiment list, and the least candidate (in the
    fixed experiment order) of minimal rank is selected."""
    if kind not in RANKINGS:
        raise ValueError(f"unknown ranking function {kind!r}")
    space = game.codespace()
    if max_depth is None:
        max_depth = max(len(space), 2)

    def expand(formula: Formula, mask: int, depth: int) -> TreeNode:
        if mask.bit_count() == 1:
            return TreeNode(mask, valuation=space.single_code(mask))
        if depth >= max_depth:
            raise NonTerminatingStrategyError(
                f"{kind} strategy did not solve the game within {max_depth} experiments")
        reduction = symmetry.reduce_experiments(game, formula)
        best = None
        best_val = None
        best_masks = None
        for inst in reduction.selected:
            ms = [mask & m for m in inst.outcome_masks()]
            val = _mask_rank(kind, space, ms)
            if best_val is None or val < best_val:
                best, best_val, best_masks = inst, val, ms
        if best is None:
            raise UnsolvableGameError("no experiments available")
        if any(m == mask for m in best_masks):
            warnings.warn(f"experiment {best.label} does not shrink the "
                          "knowledge; the strategy cannot terminate")
            raise NonTerminatingStrategyError(
                f"{kind} strategy repeats uninformative experiments")
        node = TreeNode(mask, instance=best,
                        phase1_size=reduction.phase1_size,
                        phase2_size=reduction.phase2_size)
        for idx, m in enumerate(best_masks):
            if m == 0:
                continue
            xi = best.outcome_formulas()[idx]
            child_formula = canonicalize(and_([formula, xi]))
            node.children[idx] = expand(child_formula, m, depth + 1)
        return node

    root = expand(canonicalize(game.phi0), space.full_mask, 0)
    return DecisionTree(game, root, kind)


# ---------------------------------------------------------------------------
# optimal strategies
# ---------------------------------------------------------------------------

class _Entry:
    __slots__ = ("exact", "lb", "sym_done")

    def __init__(self):
        self.exact: int | None = None
        self.lb = 0
        self.sym_done = False


class OptimalSearch:
    """Branch-and-bound minimax over accumulated knowledge.

    ``solve`` returns the optimal integer cost (depth for worst mode, the
    total over all codes for average mode); ``build_tree`` expands a
    strategy realizing it.  Internal convention: ``_search(f, mask, upper)``
    returns the exact optimum when it is < upper and INF otherwise.
    """

    def __init__(self, game: DeductiveGame, mode: str):
        if mode not in ("worst", "avg"):
            raise ValueError("mode must be 'worst' or 'avg'")
        self.game = game
        self.mode = mode
        self.space = game.codespace()
        self.n = len(self.space)
        self.out = game.max_outcomes()
        if self.out < 2:
            raise UnsolvableGameError("every experiment has a single outcome")
        self.sem: dict[int, _Entry] = {}
        self.sym: dict = {}
        self.cands: dict[int, list] = {}
        self.class_cache: dict[int, dict[str, int]] = {}
        self._tmin_memo: dict[int, int] = {0: 0, 1: 0}
        self.stats = {"nodes": 0, "sym_hits": 0, "sem_hits": 0}

    # -- bounds ------------------------------------------------------------

    def _ceil_log(self, count: int) -> int:
        w = 0
        size = 1
        while size < count:
            size *= self.out
            w += 1
        return w

    def _tmin(self, count: int) -> int:
        """Minimal total number of experiments over `count` codes for any
        strategy whose experiments have at most `out` outcomes."""
        hit = self._tmin_memo.get(count)
        if hit is not None:
            return hit
        q, r = divmod(count, self.out)
        total = count
        for i in range(self.out):
            part = q + (1 if i < r else 0)
            if part:
                total += self._tmin(part)
        self._tmin_memo[count] = total
        return total

    def _lower_bound(self, count: int) -> int:
        if self.mode == "worst":
            return self._ceil_log(count)
        return self._tmin(count)

    # -- candidates ----------------------------------------------------------

    def _semantic_classes(self, formula: Formula, mask: int) -> dict[str, int]:
        """Parameters interchangeable at this knowledge, decided on the code
        set itself (strictly more merging than the syntactic check, equally
        sound as a dominance certificate)."""
        hit = self.class_cache.get(mask)
        if hit is not None:
            return hit
        game, space = self.game, self.space
        params = game.params
        parent = {p: p for p in params}

        def find(p):
            while parent[p] != p:
                parent[p] = parent[parent[p]]
                p = parent[p]
            return p

        for i in range(len(params)):
            for j in range(i + 1, len(params)):
                a, b = params[i], params[j]
                if find(a) == find(b):
                    continue
                if not game.transposition_in_group(a, b):
                    continue
                cperm = space.code_permutation(game.transposition_lift(a, b))
                if space.permute_mask(mask, cperm) == mask:
                    parent[find(b)] = find(a)
        roots: dict[str, int] = {}
        out = {}
        for p in params:
            r = find(p)
            out[p] = roots.setdefault(r, len(roots))
        self.class_cache[mask] = out
        return out

    def _candidates(self, formula: Formula, mask: int) -> list:
        """Covering candidate list with update masks, deduplicated by update
        multiset (equal multisets have equal subgame values)."""
        hit = self.cands.get(mask)
        if hit is not None:
            return hit
        classes = self._semantic_classes(formula, mask)
        s1 = symmetry._phase1(self.game, formula, classes)
        bundles = []
        seen = set()
        for inst in s1:
            ms = tuple(mask & m for m in inst.outcome_masks())
            if any(m == mask for m in ms):
                continue  # uninformative: one outcome keeps every code
            fp = tuple(sorted(ms))
            if fp in seen:
                continue
            seen.add(fp)
            bundles.append((inst, ms))
        self.cands[mask] = bundles
        return bundles

    # -- the search ----------------------------------------------------------

    def _sym_lookup(self, formula: Formula, mask: int, entry: _Entry) -> None:
        """Fold in results cached for knowledge symmetric to this one."""
        fixed = self.space.fixed_from_mask(mask)
        g = symmetry.knowledge_graph(self.game, formula, fixed)
        key, perm = symmetry.canonical_form(g)
        bucket = self.sym.setdefault(key, [])
        for mask0, g0, perm0, entry0 in bucket:
            extracted = symmetry._extract_permutation(g, perm, g0, perm0)
            if extracted is None:
                continue
            var_map, attr_map = extracted
            full = {v: var_map.get(v, v) for v in self.game.variables}
            if not symmetry.validate_symmetry(self.game, full, attr_map):
                continue
            try:
                cperm = self.space.code_permutation(full)
            except GameError:
                continue
            if self.space.permute_mask(mask, cperm) != mask0:
                continue
            if entry0.exact is not None:
                entry.exact = entry0.exact
            entry.lb = max(entry.lb, entry0.lb)
            self.stats["sym_hits"] += 1
            return
        bucket.append((mask, g, perm, entry))

    def _search(self, formula: Formula, mask: int, upper) -> int | float:
        count = mask.bit_count()
        if count == 1:
            return 0
        if upper <= 0:
            return INF
        entry = self.sem.get(mask)
        if entry is not None:
            if entry.exact is not None:
                self.stats["sem_hits"] += 1
                return entry.exact if entry.exact < upper else INF
            if entry.lb >= upper:
                return INF
        else:
            entry = _Entry()
            self.sem[mask] = entry
        lb = self._lower_bound(count)
        entry.lb = max(entry.lb, lb)
        if entry.lb >= upper:
            return INF
        if not entry.sym_done:
            entry.sym_done = True
            self._sym_lookup(formula, mask, entry)
            if entry.exact is not None:
                return entry.exact if entry.exact < upper else INF
            if entry.lb >= upper:
                return INF
        self.stats["nodes"] += 1
        best = upper
        found = False
        for inst, ms in self._candidates(formula, mask):
            val = self._eval_candidate(formula, inst, ms, best)
            if val < best:
                best = val
                found = True
        if not found:
            entry.lb = max(entry.lb, upper)
            return INF
        entry.exact = best
        return best

    def _eval_candidate(self, formula: Formula, inst: ExperimentInstance,
                        ms: Sequence[int], cap) -> int | float:
        """Cost of playing inst at this knowledge, or INF when it cannot
        beat cap."""
        if self.mode == "worst":
            val = 0
            for idx, cm in enumerate(ms):
                if cm == 0:
                    continue
                child = self._child_formula(formula, inst, idx)
                c = self._search(child, cm, cap - 1)
                if c is INF:
                    return INF
                if 1 + c > val:
                    val = 1 + c
            return val
        kids = [(idx, cm, cm.bit_count()) for idx, cm in enumerate(ms) if cm]
        rest_lb = sum(n + self._tmin(n) for _, _, n in kids)
        if rest_lb >= cap:
            return INF
        partial = 0
        for idx, cm, n in kids:
            rest_lb -= n + self._tmin(n)
            child_upper = cap - partial - rest_lb - n
            child = self._child_formula(formula, inst, idx)
            c = self._search(child, cm, child_upper)
            if c is INF:
                return INF
            partial += n + c
        return partial

    def _child_formula(self, formula: Formula, inst: ExperimentInstance,
                       idx: int) -> Formula:
        return canonicalize(and_([formula, inst.outcome_formulas()[idx]]))

    # -- public API ------------------------------------------------------------

    def _greedy_cost(self) -> int:
        return self._greedy_from(canonicalize(self.game.phi0),
                                 self.space.full_mask)

    def _greedy_from(self, formula: Formula, mask: int) -> int:
        """Cost of a quick greedy strategy (split as evenly as possible);
        used to seed the branch-and-bound upper bound."""
        total = 0
        worst = 0
        stack = [(formula, mask, 0)]
        while stack:
            formula, mask, depth = stack.pop()
            if mask.bit_count() == 1:
                total += depth
                worst = max(worst, depth)
                continue
            best = None
            best_key = None
            for inst, ms in self._candidates(formula, mask):
                key = max(m.bit_count() for m in ms)
                if best_key is None or key < best_key:
                    best, best_key = (inst, ms), key
            if best is None:
                raise UnsolvableGameError(
                    "no experiment can distinguish the remaining codes")
            inst, ms = best
            for idx, cm in enumerate(ms):
                if cm:
                    stack.append((self._child_formula(formula, inst, idx),
                                  cm, depth + 1))
        return worst if self.mode == "worst" else total

    def solve(self) -> int:
        """The optimal cost from the initial knowledge (exact integer)."""
        root = canonicalize(self.game.phi0)
        if self.n == 1:
            return 0
        seed = self._greedy_cost() + 1
        result = self._search(root, self.space.full_mask, seed)
        if result is INF:  # pragma: no cover - the greedy bound is realizable
            raise UnsolvableGameError("search failed below a realizable bound")
        return result

    def optimal_cost(self) -> ComplexityReport | int:
        cost = self.solve()
        if self.mode == "avg":
            return Fraction(cost, self.n)
        return cost

    def build_tree(self) -> DecisionTree:
        target = self.solve()
        space = self.space

        def expand(formula: Formula, mask: int, required: int) -> TreeNode:
            if mask.bit_count() == 1:
                return TreeNode(mask, valuation=space.single_code(mask))
            for inst, ms in self._candidates(formula, mask):
                val = self._eval_candidate(formula, inst, ms, required + 1)
                if val != required:
                    continue
                node = TreeNode(mask, instance=inst)
                for idx, cm in enumerate(ms):
                    if cm == 0:
                        continue
                    child = self._child_formula(formula, inst, idx)
                    child_cost = self._search(child, cm, required)
                    node.children[idx] = expand(child, cm, child_cost)
                return node
            raise SynthError("no experiment realizes the computed optimum")

        root = expand(canonicalize(self.game.phi0), space.full_mask, target)
        return DecisionTree(self.game, root, f"optimal-{self.mode}")


def optimal(game: DeductiveGame, mode: str):
    """Optimal worst-case depth (int) or average-case cost (Fraction)."""
    return OptimalSearch(game, mode).optimal_cost()


def optimal_move(game: DeductiveGame, mode: str, knowledge: Knowledge | None = None,
                 upper=None):
    """The move an optimal strategy plays at the given knowledge.

    Returns ``(choice, cost)`` where choice is the selected experiment
    instance (or the decided code when one model remains) and cost is the
    remaining worst-case depth or average-case cost.  With a finite upper
    bound, ``(None, inf)`` reports that the bound cannot be met.
    """
    search = OptimalSearch(game, mode)
    if knowledge is None:
        knowledge = Knowledge.initial(game)
    formula, mask = knowledge.formula, knowledge.mask
    if mask == 0:
        raise SynthError("knowledge is unsatisfiable")
    if mask.bit_count() == 1:
        return game.codespace().single_code(mask), 0
    scale = 1 if mode == "worst" else mask.bit_count()
    seed = search._greedy_from(formula, mask)
    bound = seed + 1
    if upper is not None:  # the bound is exclusive: cost `upper` itself fails
        bound = min(bound, math.ceil(Fraction(upper) * scale))
    cost = search._search(formula, mask, bound)
    if cost is INF:
        return None, INF
    for inst, ms in search._candidates(formula, mask):
        if search._eval_candidate(formula, inst, ms, cost + 1) == cost:
            return inst, (cost if mode == "worst" else Fraction(cost, scale))
    raise SynthError("no experiment realizes the computed optimum")


def build_optimal_tree(game: DeductiveGame, mode: str) -> DecisionTree:
    return OptimalSearch(game, mode).build_tree()


def build_strategy_tree(game: DeductiveGame, strategy: str,
                        max_depth: int | None = None) -> DecisionTree:
    """Dispatch on a strategy name: a ranking kind or optimal-worst/avg."""
    if strategy in RANKINGS:
        return build_ranking_tree(game, strategy, max_depth)
    if strategy == "optimal-worst":
        return build_optimal_tree(game, "worst")
    if strategy == "optimal-avg":
        return build_optimal_tree(game, "avg")
    raise ValueError(f"unknown strategy {strategy!r}")


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

def tree_to_dot(tree: DecisionTree) -> str:
    lines = ["digraph strategy {", '  node [shape=box];']
    counter = [0]

    def walk(node: TreeNode) -> int:
        nid = counter[0]
        counter[0] += 1
        if node.is_leaf:
            label = tree.game.describe_code(node.valuation)
            lines.append(f'  n{nid} [shape=ellipse, label="{label}"];')
            return nid
        lines.append(f'  n{nid} [label="{node.instance.label}"];')
        for idx in sorted(node.children):
            cid = walk(node.children[idx])
            out_label = node.instance.experiment.outcome_labels[idx]
            lines.append(f'  n{nid} -> n{cid} [label="{out_label}"];')
        return nid

    walk(tree.root)
    lines.append("}")
    return "\n".join(lines)


def tree_to_json(tree: DecisionTree) -> str:
    nodes = []

    def walk(node: TreeNode) -> int:
        nid = len(nodes)
        nodes.append(None)
        if node.is_leaf:
            nodes[nid] = {"node_id": nid, "kind": "leaf",
                          "valuation": {v.name: bool(node.valuation[v])
                                        for v in tree.game.variables}}
            return nid
        children = {}
        for idx in sorted(node.children):
            children[node.instance.experiment.outcome_labels[idx]] = \
                walk(node.children[idx])
        nodes[nid] = {"node_id": nid, "kind": "experiment",
                      "experiment": node.instance.experiment.name,
                      "params": list(node.instance.params),
                      "children": children}
        return nid

    walk(tree.root)
    return json.dumps({"strategy": tree.strategy, "game": tree.game.name,
                       "nodes": nodes}, indent=2)
