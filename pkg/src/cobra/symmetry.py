"""Experiment-equivalence machinery.

Two experiment instances are interchangeable for an accumulated knowledge
when some game symmetry (a variable permutation mapping every experiment to
an experiment with the same outcome semantics) carries one update set onto
the other.  This module realizes the two-phase reduction:

* phase 1 enumerates parameter tuples lexicographically, skipping choices
  dominated by an interchangeable predecessor (plus an ascending-order rule
  for template positions that are provably interchangeable);
* phase 2 merges survivors whose attached labeled graphs are isomorphic,
  certifying every merge by extracting the witnessing permutation and
  checking it against the game structure and the update semantics.

Graphs are canonicalized exactly, by iterated color refinement with
individualization and backtracking; automorphisms discovered along the way
prune the search.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from . import satcore
from .formula import (FALSE, TRUE, Formula, Variable, and_, apply_permutation,
                      canonicalize, conj, substitute, variables,
                      K_AND, K_EXACTLY, K_NOT, K_OR, K_PARAM, K_VAR)
from .gamemodel import (ALL_TUPLES, DISTINCT_TUPLES, DeductiveGame,
                        ExperimentInstance, GameError,
                        ParameterizedExperiment)


class SymmetryError(GameError):
    pass


# ---------------------------------------------------------------------------
# labeled graphs and exact canonical labeling
# ---------------------------------------------------------------------------

class LabeledGraph:
    """An undirected vertex-labeled graph with payloads for bookkeeping.

    Labels (tuples starting with a string tag) define which vertices an
    isomorphism may exchange; payloads record what each vertex stands for so
    that a witnessing permutation can be read back off an isomorphism.
    """

    __slots__ = ("labels", "adj", "payload")

    def __init__(self):
        self.labels: list[tuple] = []
        self.adj: list[set[int]] = []
        self.payload: list[object] = []

    @property
    def n(self) -> int:
        return len(self.labels)

    def add_vertex(self, label: tuple, payload: object = None) -> int:
        self.labels.append(label)
        self.adj.append(set())
        self.payload.append(payload)
        return len(self.labels) - 1

    def add_edge(self, u: int, v: int) -> None:
        if u == v:
            raise SymmetryError("self-loops are not used in these graphs")
        self.adj[u].add(v)
        self.adj[v].add(u)

    def to_dot(self, name: str = "G") -> str:
        lines = [f"graph {name} {{"]
        for v in range(self.n):
            lbl = ":".join(str(x) for x in self.labels[v])
            if isinstance(self.payload[v], Variable):
                lbl = f"{self.payload[v].name}\\n{lbl}"
            lines.append(f'  v{v} [label="{lbl}"];')
        for u in range(self.n):
            for v in self.adj[u]:
                if u < v:
                    lines.append(f"  v{u} -- v{v};")
        lines.append("}")
        return "\n".join(lines)


def _refine(adj: list[tuple[int, ...]], colors: list[int]) -> tuple[list[int], list[int]]:
    """Equitable refinement; returns stable colors (canonically numbered)
    and an isomorphism-invariant trace of the refinement rounds."""
    n = len(colors)
    trace: list[int] = []
    ncolors = len(set(colors))
    while True:
        buckets: dict = {}
        for v in range(n):
            nbrs = adj[v]
            if len(nbrs) <= 8:
                sig = (colors[v], 0, tuple(sorted(colors[u] for u in nbrs)))
            else:
                cnt: dict[int, int] = {}
                for u in nbrs:
                    c = colors[u]
                    cnt[c] = cnt.get(c, 0) + 1
                sig = (colors[v], 1, tuple(sorted(cnt.items())))
            b = buckets.get(sig)
            if b is None:
                buckets[sig] = [v]
            else:
                b.append(v)
        items = sorted(buckets.items())
        trace.append(hash(tuple((sig, len(vs)) for sig, vs in items)))
        if len(items) == ncolors:
            break
        ncolors = len(items)
        colors = colors[:]  # keep caller's list intact
        for new_c, (_, vs) in enumerate(items):
            for v in vs:
                colors[v] = new_c
        if ncolors == n:
            break  # discrete; another round cannot refine further
    # renumber canonically even when the loop exited without renaming
    remap: dict[int, int] = {}
    for c in sorted(set(colors)):
        remap[c] = len(remap)
    return [remap[c] for c in colors], trace


class _Canonicalizer:
    MAX_NODES = 500_000

    def __init__(self, g: LabeledGraph):
        self.g = g
        self.adj = [tuple(s) for s in g.adj]
        self.n = g.n
        self.alphabet = tuple(sorted(set(g.labels)))
        rank = {l: i for i, l in enumerate(self.alphabet)}
        self.init_colors = [rank[l] for l in g.labels]
        self.best_trace: tuple[int, ...] | None = None
        self.best_cert = None
        self.best_perm: list[int] | None = None
        self.best_inv: list[int] | None = None
        self.gens: list[list[int]] = []
        self._gen_seen: set = set()
        self.nodes = 0

    def run(self) -> tuple[tuple, tuple[int, ...]]:
        colors, trace = _refine(self.adj, self.init_colors)
        self._search(colors, trace, False, [])
        return (self.alphabet, self.best_cert), tuple(self.best_perm)

    # certificate of a discrete coloring: label ranks and edges in canonical
    # positions; equal certificates mean isomorphic graphs
    def _certificate(self, colors: list[int]):
        n = self.n
        inv = [0] * n
        for v, c in enumerate(colors):
            inv[c] = v
        labels = tuple(self.init_colors[inv[p]] for p in range(n))
        edges = []
        for v in range(n):
            cv = colors[v]
            for u in self.adj[v]:
                cu = colors[u]
                if cv < cu:
                    edges.append((cv, cu))
        edges.sort()
        return (labels, tuple(edges))

    def _search(self, colors: list[int], trace: list[int], better: bool,
                indiv: list[int]) -> None:
        self.nodes += 1
        if self.nodes > self.MAX_NODES:
            raise SymmetryError("canonical labeling search exceeded its budget")
        if not better and self.best_trace is not None:
            bt = self.best_trace
            m = min(len(trace), len(bt))
            for i in range(m):
                if trace[i] != bt[i]:
                    if trace[i] > bt[i]:
                        return
                    better = True
                    break
        # pick the smallest non-singleton cell (ties: lowest color id);
        # the choice only depends on the coloring, so it is iso-invariant
        n = self.n
        count = [0] * n
        for c in colors:
            count[c] += 1
        target = -1
        best_size = n + 1
        for c in range(n):
            if count[c] == 0:
                break
            if 2 <= count[c] < best_size:
                target = c
                best_size = count[c]
        if target < 0:
            self._leaf(colors, trace, better)
            return
        members = sorted(v for v in range(n) if colors[v] == target)
        processed: list[int] = []
        orbit_of = None
        gens_seen = -1
        for v in members:
            if processed:
                if gens_seen != len(self.gens):
                    orbit_of = self._orbits(indiv)
                    gens_seen = len(self.gens)
                if orbit_of is not None:
                    rv = orbit_of[v]
                    if any(orbit_of[u] == rv for u in processed):
                        continue
            child = self._individualize(colors, target, v)
            child_colors, child_tr = _refine(self.adj, child)
            self._search(child_colors, trace + child_tr, better, indiv + [v])
            processed.append(v)

    def _individualize(self, colors: list[int], target: int, v: int) -> list[int]:
        out = []
        for u, c in enumerate(colors):
            if c < target or (c == target and u == v):
                out.append(c * 2)
            else:
                out.append(c * 2 + 1)
        return out

    def _orbits(self, indiv: list[int]) -> list[int] | None:
        """Orbit representatives under the automorphisms found so far that
        fix every individualized vertex; None when no generator applies."""
        useful = [g for g in self.gens if all(g[w] == w for w in indiv)]
        if not useful:
            return None
        parent = list(range(self.n))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for g in useful:
            for a in range(self.n):
                ra, rb = find(a), find(g[a])
                if ra != rb:
                    parent[rb] = ra
        return [find(x) for x in range(self.n)]

    def _leaf(self, colors: list[int], trace: list[int], better: bool) -> None:
        cert = self._certificate(colors)
        trace_t = tuple(trace)
        if self.best_cert is None or better or (trace_t, cert) < (self.best_trace, self.best_cert):
            self.best_trace = trace_t
            self.best_cert = cert
            self.best_perm = colors[:]
            inv = [0] * self.n
            for v, c in enumerate(colors):
                inv[c] = v
            self.best_inv = inv
            return
        if trace_t == self.best_trace and cert == self.best_cert:
            gamma = [self.best_inv[colors[v]] for v in range(self.n)]
            if any(gamma[v] != v for v in range(self.n)):
                key = tuple(gamma)
                if key not in self._gen_seen and len(self.gens) < 512:
                    self._gen_seen.add(key)
                    self.gens.append(gamma)


def canonical_form(g: LabeledGraph) -> tuple[tuple, tuple[int, ...]]:
    """Exact canonical form: (key, permutation).  Keys of two graphs are
    equal iff the graphs are isomorphic respecting labels; the permutation
    maps each vertex to its canonical position."""
    c = _Canonicalizer(g)
    return c.run()


def canonical_key(g: LabeledGraph):
    """Canonical key only (see canonical_form)."""
    return canonical_form(g)[0]


# ---------------------------------------------------------------------------
# base graph and attached formula graphs
# ---------------------------------------------------------------------------

L_ATTR = ("attr",)
L_IMG = ("img",)
L_VAR = ("var",)
L_ACC = ("acc",)
L_OUT = ("out",)
L_DUP = ("dup",)
L_FALSE = ("const", "false")

_OP_LABEL = {K_NOT: ("op", "not"), K_AND: ("op", "and"), K_OR: ("op", "or")}


def _var_label(game: DeductiveGame, v: Variable, pinned: frozenset,
               image_vars: frozenset) -> tuple:
    if v in pinned:
        return ("pin", v.name)
    if v in image_vars:
        return L_IMG
    return L_VAR


def _pinned_vars(game: DeductiveGame) -> frozenset:
    """Variables named directly inside outcome templates are pinned: a
    symmetry moving them would change the experiments' textual outcomes."""
    raw = frozenset()
    for t in game.experiments:
        raw |= t.raw_vars
    return raw


def build_base_graph(game: DeductiveGame) -> tuple[LabeledGraph, dict[Variable, int], dict[str, int]]:
    """The base graph: one vertex per variable and per attribute.

    Attribute vertices join their image variables; two variables are joined
    when they encode the same parameter under attributes that occur at a
    shared template position of some experiment.  Automorphisms of this
    graph (restricted to variables, and certified by the validation in this
    module) are game symmetries.
    """
    g = LabeledGraph()
    pinned = _pinned_vars(game)
    image_vars = frozenset().union(*(a.image for a in game.attributes)) \
        if game.attributes else frozenset()
    var_vertex: dict[Variable, int] = {}
    for v in game.variables:
        var_vertex[v] = g.add_vertex(_var_label(game, v, pinned, image_vars), v)
    attr_vertex: dict[str, int] = {}
    for a in game.attributes:
        attr_vertex[a.name] = g.add_vertex(L_ATTR, ("attr", a.name))
        for p in game.params:
            g.add_edge(attr_vertex[a.name], var_vertex[a.mapping[p]])
    # co-occurrence edges
    pairs: set[tuple[str, str]] = set()
    for t in game.experiments:
        for fs in t.position_attrs:
            fl = sorted(fs)
            for i in range(len(fl)):
                for j in range(i + 1, len(fl)):
                    pairs.add((fl[i], fl[j]))
    for f, h in pairs:
        fa, ha = game.attribute_map[f], game.attribute_map[h]
        for p in game.params:
            u, v = var_vertex[fa.mapping[p]], var_vertex[ha.mapping[p]]
            if u != v:
                g.add_edge(u, v)
    return g, var_vertex, attr_vertex


class _GraphBuilder:
    """Base graph plus attached formula dags."""

    def __init__(self, game: DeductiveGame):
        self.game = game
        self.graph, self.var_vertex, self.attr_vertex = build_base_graph(game)
        self._formula_vertex: dict[Formula, int] = {}
        self._false_vertex: int | None = None

    def attach(self, f: Formula, root_label: tuple) -> None:
        root = self.graph.add_vertex(root_label, ("root", root_label[0]))
        f = canonicalize(f)
        if f.is_true:
            return  # a bare root stands for a collapsed, always-true formula
        self.graph.add_edge(root, self._node(f))

    def _node(self, f: Formula) -> int:
        hit = self._formula_vertex.get(f)
        if hit is not None:
            return hit
        if f.kind == K_VAR:
            v = self.var_vertex[f.var]
        elif f.is_false:
            if self._false_vertex is None:
                self._false_vertex = self.graph.add_vertex(L_FALSE, ("const", False))
            v = self._false_vertex
        elif f.is_true:
            raise SymmetryError("true constants cannot occur below an operator")
        elif f.kind == K_PARAM:
            raise SymmetryError("cannot attach a template with parameter atoms")
        else:
            label = _OP_LABEL.get(f.kind) or ("op", "exactly", f.k)
            v = self.graph.add_vertex(label, ("op", f))
            seen: dict[int, int] = {}
            for c in f.children:
                cv = self._node(c)
                times = seen.get(cv, 0)
                seen[cv] = times + 1
                if times == 0:
                    self.graph.add_edge(v, cv)
                else:
                    # preserve child multiplicity (counting operators only)
                    spacer = self.graph.add_vertex(L_DUP, ("dup",))
                    self.graph.add_edge(v, spacer)
                    self.graph.add_edge(spacer, cv)
        self._formula_vertex[f] = v
        return v


def knowledge_graph(game: DeductiveGame, phi: Formula,
                    fixed: Mapping[Variable, bool]) -> LabeledGraph:
    """Base graph plus the accumulated knowledge with its fixed variables
    substituted away, under an acc-labeled root."""
    b = _GraphBuilder(game)
    b.attach(substitute(phi, fixed), L_ACC)
    return b.graph


def experiment_graph(game: DeductiveGame, phi: Formula,
                     fixed: Mapping[Variable, bool],
                     inst: ExperimentInstance) -> LabeledGraph:
    """Knowledge graph plus one out-rooted dag per instantiated outcome."""
    b = _GraphBuilder(game)
    b.attach(substitute(phi, fixed), L_ACC)
    for xi in inst.outcome_formulas():
        b.attach(substitute(xi, fixed), L_OUT)
    return b.graph


def base_automorphism_to_symmetry(game: DeductiveGame,
                                  mapping: Mapping[int, int]) -> dict[Variable, Variable]:
    """Restrict a label- and edge-preserving automorphism of the base graph
    to the variables."""
    g, var_vertex, _ = build_base_graph(game)
    n = g.n
    if sorted(mapping) != list(range(n)) or sorted(mapping.values()) != list(range(n)):
        raise SymmetryError("mapping is not a permutation of the base-graph vertices")
    for v in range(n):
        if g.labels[v] != g.labels[mapping[v]]:
            raise SymmetryError("mapping does not preserve labels")
        for u in g.adj[v]:
            if mapping[u] not in g.adj[mapping[v]]:
                raise SymmetryError("mapping does not preserve edges")
    out = {}
    payload = g.payload
    for var, idx in var_vertex.items():
        img = payload[mapping[idx]]
        if not isinstance(img, Variable):
            raise SymmetryError("mapping sends a variable to a non-variable vertex")
        out[var] = img
    return out


# ---------------------------------------------------------------------------
# symmetry validation: certify a candidate permutation as a game symmetry
# ---------------------------------------------------------------------------

def _extract_permutation(g1: LabeledGraph, perm1: Sequence[int],
                         g2: LabeledGraph, perm2: Sequence[int]
                         ) -> tuple[dict[Variable, Variable], dict[str, str]] | None:
    """Read the isomorphism g1 -> g2 implied by equal canonical forms."""
    inv2 = [0] * g2.n
    for v, c in enumerate(perm2):
        inv2[c] = v
    var_map: dict[Variable, Variable] = {}
    attr_map: dict[str, str] = {}
    for v in range(g1.n):
        p = g1.payload[v]
        q = g2.payload[inv2[perm1[v]]]
        if isinstance(p, Variable):
            if not isinstance(q, Variable):
                return None
            var_map[p] = q
        elif isinstance(p, tuple) and p and p[0] == "attr":
            if not (isinstance(q, tuple) and q and q[0] == "attr"):
                return None
            attr_map[p[1]] = q[1]
    return var_map, attr_map


def _template_invariant(game: DeductiveGame, t: ParameterizedExperiment,
                        attr_map: Mapping[str, str]) -> bool:
    """Does relabeling attributes by attr_map (with some repositioning of
    the template parameters) leave the outcome-template multiset unchanged?"""
    relevant = {f: attr_map.get(f, f) for f in t.used_attrs}
    if all(f == h for f, h in relevant.items()):
        return True
    key = (t.index, tuple(sorted(relevant.items())))
    cache = game._transposition_memo  # reuse the game-level memo space
    hit = cache.get(("tmpl", key))
    if hit is not None:
        return hit
    ok = _find_position_perm(t, relevant)
    cache[("tmpl", key)] = ok
    return ok


def _relabel_template(t: Formula, attr_map: Mapping[str, str],
                      pos_map: Mapping[int, int], memo: dict) -> Formula:
    from .formula import _mk

    def walk(f: Formula) -> Formula:
        hit = memo.get(f)
        if hit is not None:
            return hit
        if f.kind == K_PARAM:
            out = _mk(K_PARAM, pname=attr_map.get(f.pname, f.pname),
                      pindex=pos_map.get(f.pindex, f.pindex))
        elif not f.children:
            out = f
        else:
            ch = tuple(walk(c) for c in f.children)
            out = f if ch == f.children else _mk(
                f.kind, var=f.var, pname=f.pname, pindex=f.pindex,
                k=f.k, children=ch)
        memo[f] = out
        return out

    return canonicalize(walk(t))


def _position_occurrences(t: ParameterizedExperiment) -> list[dict[str, int]]:
    """How often each attribute atom attr($j) occurs per position (counting
    through shared subformulas once, which is all the matching needs)."""
    occ: list[dict[str, int]] = [dict() for _ in range(t.arity)]
    seen: set[int] = set()

    def walk(f: Formula):
        if id(f) in seen:
            return
        seen.add(id(f))
        if f.kind == K_PARAM:
            d = occ[f.pindex - 1]
            d[f.pname] = d.get(f.pname, 0) + 1
            return
        for c in f.children:
            walk(c)

    for tpl in t.templates:
        seen.clear()
        walk(tpl)
    return occ


def _find_position_perm(t: ParameterizedExperiment,
                        attr_map: Mapping[str, str],
                        attempt_cap: int = 4096) -> bool:
    """Is there a repositioning of template parameters under which the
    attribute relabeling fixes the template multiset?  Candidate positions
    are narrowed by attribute-occurrence profiles before backtracking."""
    base = sorted(t.templates, key=id)
    k = t.arity
    occ = _position_occurrences(t)
    # position j may map to position i only if i's profile equals j's
    # profile pushed through the attribute relabeling
    pushed = [{attr_map.get(f, f): c for f, c in occ[j].items()} for j in range(k)]
    candidates = [[i for i in range(k) if occ[i] == pushed[j]] for j in range(k)]
    if any(not c for c in candidates):
        return False
    order = sorted(range(k), key=lambda j: len(candidates[j]))
    assignment: dict[int, int] = {}
    used: set[int] = set()
    attempts = 0

    def relabeled_matches() -> bool:
        pos_map = {j + 1: assignment[j] + 1 for j in range(k)}
        memo: dict = {}
        out = sorted((_relabel_template(tpl, attr_map, pos_map, memo)
                      for tpl in t.templates), key=id)
        return out == base

    def backtrack(depth: int) -> bool:
        nonlocal attempts
        if depth == k:
            attempts += 1
            return relabeled_matches()
        if attempts >= attempt_cap:
            return False
        j = order[depth]
        for i in candidates[j]:
            if i in used:
                continue
            assignment[j] = i
            used.add(i)
            if backtrack(depth + 1):
                return True
            used.discard(i)
        return False

    return backtrack(0)


def _global_sigma(game: DeductiveGame, var_map: Mapping[Variable, Variable],
                  attr_map: Mapping[str, str]) -> dict[str, str] | None:
    """The single parameter permutation through which var_map acts on every
    attribute image (combined with the attribute relabeling), or None."""
    sigma: dict[str, str] = {}
    for a in game.attributes:
        target_name = attr_map.get(a.name, a.name)
        target = game.attribute_map.get(target_name)
        if target is None:
            return None
        inverse = {v: p for p, v in target.mapping.items()}
        for p in game.params:
            img = var_map.get(a.mapping[p], a.mapping[p])
            q = inverse.get(img)
            if q is None:
                return None
            if sigma.setdefault(p, q) != q:
                return None
    return sigma


def validate_symmetry(game: DeductiveGame, var_map: Mapping[Variable, Variable],
                      attr_map: Mapping[str, str]) -> bool:
    """Certify that a variable permutation is a game symmetry.

    Requires (a) the permutation to act on attribute images through one
    global parameter permutation combined with the attribute relabeling,
    (b) every experiment's templates to be invariant under that attribute
    relabeling (modulo repositioning of template parameters), and (c) any
    directly-named template variable to stay put.
    """
    if _global_sigma(game, var_map, attr_map) is None:
        return False
    pinned = _pinned_vars(game)
    for v in pinned:
        if var_map.get(v, v) != v:
            return False
    for t in game.experiments:
        if not _template_invariant(game, t, attr_map):
            return False
    return True


# ---------------------------------------------------------------------------
# dominance pruning (phase 1)
# ---------------------------------------------------------------------------

def interchangeable_params(game: DeductiveGame, phi: Formula) -> dict[str, int]:
    """Partition the parameters into classes whose pairwise transpositions
    are game symmetries fixing the knowledge syntactically (canonical forms
    compared)."""
    phi = canonicalize(phi)
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
            lift = game.transposition_lift(a, b)
            if canonicalize(apply_permutation(phi, lift)) is phi:
                parent[find(b)] = find(a)
    roots = {}
    out = {}
    for p in params:
        r = find(p)
        out[p] = roots.setdefault(r, len(roots))
    return out


def is_dominated(game: DeductiveGame, phi: Formula, t: ParameterizedExperiment,
                 prefix: tuple[str, ...], a: str, b: str) -> bool:
    """Whether choice b is dominated by its predecessor a for (phi, t,
    prefix): every instance starting prefix+b is interchangeable (at phi)
    with an already-generated one starting prefix+a.

    Besides the infeasibility case, dominance is certified when swapping
    a and b is a game symmetry that leaves the accumulated knowledge
    syntactically invariant; the instances of the two subtrees then pair up
    position by position.  The experiment must be prunable (faithful, with
    every template position touching the same attributes) and neither
    parameter may already occur in the prefix, otherwise the pairing does
    not stay inside the generated region.
    """
    phi = canonicalize(phi)
    n = len(game.params)
    if not t.instances.prefix_feasible(prefix + (a,), n):
        raise GameError("precondition: prefix+a must be extendable to an instance")
    if not t.instances.prefix_feasible(prefix + (b,), n):
        return True
    if not t.prunable:
        return False
    if a in prefix or b in prefix:
        return False
    if not game.transposition_in_group(a, b):
        return False
    lift = game.transposition_lift(a, b)
    return canonicalize(apply_permutation(phi, lift)) is phi


def _phase1(game: DeductiveGame, phi: Formula,
            classes: Mapping[str, int]) -> list[ExperimentInstance]:
    """Lexicographic generation with dominance and position-symmetry
    pruning; the result covers all experiment instances up to equivalence
    at phi."""
    params = game.params
    pidx = game.param_index
    out: list[ExperimentInstance] = []
    for t in game.experiments:
        if t.arity == 0:
            out.append(ExperimentInstance(game, t, ()))
            continue
        groups = t.position_groups
        kind = t.instances.kind
        k = t.arity

        def rec(prefix: tuple[str, ...], used: frozenset, group_floor: dict[int, int]):
            pos = len(prefix)
            if pos == k:
                out.append(ExperimentInstance(game, t, prefix))
                return
            grp = groups[pos]
            floor = group_floor.get(grp, 0)
            # classes already represented by an earlier kept sibling outside
            # the prefix; further members are dominated by that sibling
            seen_classes: set[int] = set()
            for i in range(floor, len(params)):
                p = params[i]
                if kind == DISTINCT_TUPLES and p in used:
                    continue
                in_prefix = p in prefix
                if (t.prunable and not in_prefix
                        and classes[p] in seen_classes):
                    continue
                nf = dict(group_floor)
                nf[grp] = i if kind == ALL_TUPLES else i + 1
                rec(prefix + (p,), used | {p}, nf)
                if t.prunable and not in_prefix:
                    seen_classes.add(classes[p])

        rec((), frozenset(), {})
    out.sort(key=lambda e: e.order_key)
    return out


# ---------------------------------------------------------------------------
# the two-phase reduction
# ---------------------------------------------------------------------------

@dataclass
class Reduction:
    selected: list[ExperimentInstance]
    phase1_size: int
    phase2_size: int


def reduce_experiments(game: DeductiveGame, phi: Formula,
                       use_cache: bool = True) -> Reduction:
    """Compute a set of experiment instances covering all of them up to
    equivalence at the given knowledge, keeping the least representative of
    every merged class.

    Reductions are cached per game against the canonical form of the
    knowledge graph: knowledge symmetric to an earlier one reuses its
    reduction, mapped through the (certified) witnessing permutation.
    """
    phi = canonicalize(phi)
    space = game.codespace()
    phi_mask = space.mask_of(phi)
    fixed = space.fixed_from_mask(phi_mask)
    cache = getattr(game, "_reduction_cache", None)
    if cache is None:
        cache = game._reduction_cache = {}
    kg = kperm = key = None
    if use_cache:
        kg = knowledge_graph(game, phi, fixed)
        key, kperm = canonical_form(kg)
        for entry in cache.get(key, ()):
            mapped = _map_cached_reduction(game, space, phi_mask, kg, kperm, entry)
            if mapped is not None:
                return mapped
    classes = interchangeable_params(game, phi)
    s1 = _phase1(game, phi, classes)

    # group by cheap isomorphism invariants before building any graphs:
    # update model counts and update fixed-variable counts are both
    # preserved by every game symmetry
    groups: dict = {}
    for inst in s1:
        stats = tuple(sorted(
            ((phi_mask & m).bit_count(),
             len(space.fixed_from_mask(phi_mask & m)))
            for m in inst.outcome_masks()))
        groups.setdefault((inst.experiment.index, stats), []).append(inst)

    selected: list[ExperimentInstance] = []
    for gsig in groups:
        members = groups[gsig]
        if len(members) == 1:
            selected.append(members[0])
            continue
        # merge instances with semantically identical update sets: the
        # identity permutation already witnesses their interchangeability
        by_updates: dict = {}
        for inst in members:
            ukey = tuple(sorted(phi_mask & m for m in inst.outcome_masks()))
            by_updates.setdefault(ukey, inst)
        reps = sorted(by_updates.values(), key=lambda e: e.order_key)
        if len(reps) == 1:
            selected.append(reps[0])
            continue
        clusters: list[dict] = []
        by_key: dict = {}
        for inst in reps:
            merged = False
            # cheap attempt first: align parameter tuples directly
            for cl in clusters:
                if _try_param_merge(game, space, phi_mask, inst, cl["inst"]):
                    merged = True
                    break
            if merged:
                continue
            graph = experiment_graph(game, phi, fixed, inst)
            gkey, perm = canonical_form(graph)
            for cl in by_key.get(gkey, ()):
                if _certify_merge(game, space, phi_mask, graph, perm, inst,
                                  cl["graph"], cl["perm"], cl["inst"]):
                    merged = True
                    break
            if not merged:
                cl = {"inst": inst, "graph": graph, "perm": perm}
                clusters.append(cl)
                by_key.setdefault(gkey, []).append(cl)
                selected.append(inst)
    selected.sort(key=lambda e: e.order_key)
    reduction = Reduction(selected, len(s1), len(selected))
    if use_cache and key is not None:
        cache.setdefault(key, []).append(
            {"mask": phi_mask, "graph": kg, "perm": kperm,
             "reduction": reduction})
    return reduction


def _map_cached_reduction(game: DeductiveGame, space, phi_mask: int,
                          kg: LabeledGraph, kperm, entry) -> Reduction | None:
    """Try to reuse a cached reduction computed for symmetric knowledge by
    mapping its instances through the witnessing parameter permutation."""
    extracted = _extract_permutation(kg, kperm, entry["graph"], entry["perm"])
    if extracted is None:
        return None
    var_map, attr_map = extracted
    if any(attr_map.get(f, f) != f for f in attr_map):
        return None  # attribute-moving witnesses are not mapped back
    full = {v: var_map.get(v, v) for v in game.variables}
    if not validate_symmetry(game, full, attr_map):
        return None
    sigma = _global_sigma(game, full, attr_map)
    if sigma is None:
        return None
    try:
        cperm = space.code_permutation(full)
    except GameError:
        return None
    if space.permute_mask(phi_mask, cperm) != entry["mask"]:
        return None
    inverse = {q: p for p, q in sigma.items()}
    donor: Reduction = entry["reduction"]
    selected = [ExperimentInstance(game, e.experiment,
                                   tuple(inverse[p] for p in e.params))
                for e in donor.selected]
    selected.sort(key=lambda e: e.order_key)
    return Reduction(selected, donor.phase1_size, donor.phase2_size)


def _certify_with_perm(game: DeductiveGame, space, phi_mask: int,
                       inst1: ExperimentInstance, inst2: ExperimentInstance,
                       var_map: Mapping[Variable, Variable],
                       attr_map: Mapping[str, str]) -> bool:
    """Certify inst1 ~ inst2 via a candidate permutation: it must be a game
    symmetry and must carry inst1's update sets onto inst2's."""
    full = {v: var_map.get(v, v) for v in game.variables}
    if not validate_symmetry(game, full, attr_map):
        return False
    try:
        cperm = space.code_permutation(full)
    except GameError:
        return False
    left = sorted(space.permute_mask(phi_mask & m, cperm)
                  for m in inst1.outcome_masks())
    right = sorted(phi_mask & m2 for m2 in inst2.outcome_masks())
    return left == right


def _certify_merge(game: DeductiveGame, space, phi_mask: int,
                   g1: LabeledGraph, perm1, inst1: ExperimentInstance,
                   g2: LabeledGraph, perm2, inst2: ExperimentInstance) -> bool:
    """Equal canonical keys propose inst1 ~ inst2; certify it by validating
    the extracted permutation structurally (a game symmetry) and
    semantically (it carries the update sets of inst1 onto inst2's)."""
    extracted = _extract_permutation(g1, perm1, g2, perm2)
    if extracted is None:
        return False
    var_map, attr_map = extracted
    return _certify_with_perm(game, space, phi_mask, inst1, inst2,
                              var_map, attr_map)


def _try_param_merge(game: DeductiveGame, space, phi_mask: int,
                     inst1: ExperimentInstance,
                     inst2: ExperimentInstance) -> bool:
    """Cheap merge attempt that skips graph construction: align the two
    parameter tuples positionally, extend to an alphabet permutation, and
    certify its lift.  Misses nothing that a failed attempt would forbid;
    callers fall back to the exact graph check."""
    if inst1.experiment is not inst2.experiment:
        return False
    sigma: dict[str, str] = {}
    image: set[str] = set()
    for p, q in zip(inst1.params, inst2.params):
        if sigma.setdefault(p, q) != q:
            return False
    image = set(sigma.values())
    if len(image) != len(sigma):
        return False
    rest_img = {p for p in game.params if p not in image}
    leftover_dom = []
    for p in game.params:
        if p in sigma:
            continue
        if p in rest_img:  # prefer fixing untouched parameters
            sigma[p] = p
            rest_img.discard(p)
        else:
            leftover_dom.append(p)
    for p, q in zip(leftover_dom, sorted(rest_img, key=game.param_index.get)):
        sigma[p] = q
    var_map: dict[Variable, Variable] = {}
    for attr in game.attributes:
        for p in game.params:
            var_map[attr.mapping[p]] = attr.mapping[sigma[p]]
    return _certify_with_perm(game, space, phi_mask, inst1, inst2, var_map, {})


def experiments_for(game: DeductiveGame, phi: Formula) -> list[ExperimentInstance]:
    """The reduced, ordered experiment list for an accumulated knowledge."""
    return reduce_experiments(game, phi).selected


def are_equivalent(game: DeductiveGame, phi: Formula, e1: ExperimentInstance,
                   e2: ExperimentInstance) -> bool:
    """One-sided equivalence check through graph isomorphism: True certifies
    that the two instances are interchangeable at phi; False only means the
    check could not establish it."""
    phi = canonicalize(phi)
    space = game.codespace()
    phi_mask = space.mask_of(phi)
    fixed = space.fixed_from_mask(phi_mask)
    g1 = experiment_graph(game, phi, fixed, e1)
    g2 = experiment_graph(game, phi, fixed, e2)
    k1, p1 = canonical_form(g1)
    k2, p2 = canonical_form(g2)
    if k1 != k2:
        return False
    return _certify_merge(game, space, phi_mask, g1, p1, e1, g2, p2, e2)
