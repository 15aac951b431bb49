"""Propositional formulas over named variables.

Only commutative connectives are available: negation, conjunction,
disjunction and the counting operator ``exactly k of ...``, plus the two
constants.  Implication is deliberately absent and must be rewritten with
the allowed operators.

Formula objects are immutable and hash-consed: structurally identical
formulas are the *same* object, so equality and hashing are O(1) and
shared subformulas are stored once.  Besides game variables, a formula may
contain parameter atoms ``attr($j)`` acting as placeholders; these only
make sense inside outcome templates and are rejected by evaluation and CNF
compilation.
"""
from __future__ import annotations

import functools
from typing import Callable, Iterable, Iterator, Mapping, Sequence


class FormulaError(Exception):
    """Base class for formula-level errors."""


class UnknownVariableError(FormulaError):
    """A valuation or permutation does not cover a variable of the formula."""


class TemplateAtomError(FormulaError):
    """An uninstantiated parameter atom was used where a variable is required."""


class PermutationError(FormulaError):
    """The mapping passed to apply_permutation is not a bijection."""


@functools.total_ordering
class Variable:
    """A propositional variable, identified by its (nonempty) name."""

    __slots__ = ("name",)

    def __init__(self, name: str):
        if not isinstance(name, str) or not name:
            raise ValueError("variable names must be nonempty strings")
        self.name = name

    def __eq__(self, other):
        return isinstance(other, Variable) and self.name == other.name

    def __lt__(self, other):
        if not isinstance(other, Variable):
            return NotImplemented
        return self.name < other.name

    def __hash__(self):
        return hash(("Variable", self.name))

    def __repr__(self):
        return f"Variable({self.name!r})"


# Node kinds, in the order used to sort children of commutative operators:
# constants first, then variables, parameter atoms, negations, conjunctions,
# disjunctions and counting nodes.
K_TRUE = 0
K_FALSE = 1
K_VAR = 2
K_PARAM = 3
K_NOT = 4
K_AND = 5
K_OR = 6
K_EXACTLY = 7

_INTERN: dict = {}


class Formula:
    """One hash-consed node of a formula tree; use the module constructors."""

    __slots__ = ("kind", "var", "pname", "pindex", "k", "children",
                 "_canonical", "_vars", "_params")

    def __init__(self, kind, var=None, pname=None, pindex=None, k=None, children=()):
        self.kind = kind
        self.var = var
        self.pname = pname
        self.pindex = pindex
        self.k = k
        self.children = children
        self._canonical = None
        self._vars = None
        self._params = None

    # Hash-consing makes structural equality coincide with identity, so the
    # default id-based __eq__/__hash__ are already correct.

    @property
    def is_true(self):
        return self.kind == K_TRUE

    @property
    def is_false(self):
        return self.kind == K_FALSE

    @property
    def is_constant(self):
        return self.kind in (K_TRUE, K_FALSE)

    def __repr__(self):
        return f"Formula({pretty(self)})"

    def walk(self) -> Iterator["Formula"]:
        """Yield every node of the tree (shared nodes may repeat)."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(node.children)


def _mk(kind, var=None, pname=None, pindex=None, k=None, children=()):
    key = (kind, var, pname, pindex, k, children)
    node = _INTERN.get(key)
    if node is None:
        node = Formula(kind, var, pname, pindex, k, children)
        _INTERN[key] = node
    return node


TRUE = _mk(K_TRUE)
FALSE = _mk(K_FALSE)


def var_(v) -> Formula:
    """Atom for a variable; accepts a Variable or a name."""
    if isinstance(v, str):
        v = Variable(v)
    elif not isinstance(v, Variable):
        raise TypeError(f"expected Variable or str, got {type(v).__name__}")
    return _mk(K_VAR, var=v)


def param_(attr_name: str, index: int) -> Formula:
    """Parameter atom ``attr_name($index)`` for use in outcome templates."""
    if index < 1:
        raise ValueError("parameter indices start at 1")
    return _mk(K_PARAM, pname=attr_name, pindex=index)


def not_(f: Formula) -> Formula:
    return _mk(K_NOT, children=(f,))


def and_(children: Iterable[Formula]) -> Formula:
    ch = tuple(children)
    if len(ch) < 2:
        raise ValueError("a conjunction needs at least two operands (use conj)")
    return _mk(K_AND, children=ch)


def or_(children: Iterable[Formula]) -> Formula:
    ch = tuple(children)
    if len(ch) < 2:
        raise ValueError("a disjunction needs at least two operands (use disj)")
    return _mk(K_OR, children=ch)


def exactly(k: int, children: Iterable[Formula]) -> Formula:
    ch = tuple(children)
    if not ch:
        raise ValueError("exactly-k needs at least one operand")
    if not 0 <= k <= len(ch):
        raise ValueError(f"exactly-{k} over {len(ch)} operands is out of range")
    return _mk(K_EXACTLY, k=k, children=ch)


def conj(children: Iterable[Formula]) -> Formula:
    """Conjunction that tolerates zero or one operand."""
    ch = tuple(children)
    if not ch:
        return TRUE
    if len(ch) == 1:
        return ch[0]
    return and_(ch)


def disj(children: Iterable[Formula]) -> Formula:
    """Disjunction that tolerates zero or one operand."""
    ch = tuple(children)
    if not ch:
        return FALSE
    if len(ch) == 1:
        return ch[0]
    return or_(ch)


# ---------------------------------------------------------------------------
# structural ordering and the canonical form
# ---------------------------------------------------------------------------

def _cmp(f: Formula, g: Formula) -> int:
    if f is g:
        return 0
    if f.kind != g.kind:
        return -1 if f.kind < g.kind else 1
    if f.kind == K_VAR:
        return -1 if f.var.name < g.var.name else 1
    if f.kind == K_PARAM:
        a, b = (f.pname, f.pindex), (g.pname, g.pindex)
        return -1 if a < b else 1
    if f.kind == K_EXACTLY and f.k != g.k:
        return -1 if f.k < g.k else 1
    for cf, cg in zip(f.children, g.children):
        c = _cmp(cf, cg)
        if c:
            return c
    if len(f.children) != len(g.children):
        return -1 if len(f.children) < len(g.children) else 1
    return 0


formula_sort_key = functools.cmp_to_key(_cmp)


def canonicalize(f: Formula) -> Formula:
    """Canonical syntactic form.

    Nested conjunctions/disjunctions are flattened, children of commutative
    operators are sorted by a fixed structural order, duplicate children of
    and/or are dropped, and constants are folded away.  Two formulas are
    syntactically equivalent (equal up to commutativity, associativity and
    idempotence) exactly when their canonical forms are the same object.
    """
    if f._canonical is not None:
        return f._canonical
    kind = f.kind
    if kind in (K_TRUE, K_FALSE, K_VAR, K_PARAM):
        result = f
    elif kind == K_NOT:
        c = canonicalize(f.children[0])
        if c.is_true:
            result = FALSE
        elif c.is_false:
            result = TRUE
        else:
            result = _mk(K_NOT, children=(c,))
    elif kind in (K_AND, K_OR):
        absorber = FALSE if kind == K_AND else TRUE
        neutral = TRUE if kind == K_AND else FALSE
        flat: list[Formula] = []
        stack = list(reversed(f.children))
        dead = False
        while stack:
            c = canonicalize(stack.pop())
            if c is absorber:
                dead = True
                break
            if c is neutral:
                continue
            if c.kind == kind:
                flat.extend(c.children)
            else:
                flat.append(c)
        if dead:
            result = absorber
        else:
            uniq = sorted(set(flat), key=formula_sort_key)
            if not uniq:
                result = neutral
            elif len(uniq) == 1:
                result = uniq[0]
            else:
                result = _mk(kind, children=tuple(uniq))
    elif kind == K_EXACTLY:
        k = f.k
        kept: list[Formula] = []
        for c in f.children:
            c = canonicalize(c)
            if c.is_true:
                k -= 1
            elif not c.is_false:
                kept.append(c)
        if k < 0 or k > len(kept):
            result = FALSE
        elif not kept:
            result = TRUE  # k == 0 here
        else:
            kept.sort(key=formula_sort_key)
            result = _mk(K_EXACTLY, k=k, children=tuple(kept))
    else:  # pragma: no cover
        raise AssertionError(f"unknown node kind {kind}")
    f._canonical = result
    result._canonical = result
    return result


# ---------------------------------------------------------------------------
# queries
# ---------------------------------------------------------------------------

def variables(f: Formula) -> frozenset:
    """The set of variables occurring in the formula."""
    if f._vars is None:
        if f.kind == K_VAR:
            f._vars = frozenset((f.var,))
        elif f.children:
            f._vars = frozenset().union(*(variables(c) for c in f.children))
        else:
            f._vars = frozenset()
    return f._vars


def param_atoms(f: Formula) -> frozenset:
    """The set of (attribute name, index) parameter atoms in the formula."""
    if f._params is None:
        if f.kind == K_PARAM:
            f._params = frozenset(((f.pname, f.pindex),))
        elif f.children:
            f._params = frozenset().union(*(param_atoms(c) for c in f.children))
        else:
            f._params = frozenset()
    return f._params


def evaluate(f: Formula, valuation: Mapping[Variable, bool]) -> bool:
    """Evaluate under a total valuation of the formula's variables."""
    kind = f.kind
    if kind == K_TRUE:
        return True
    if kind == K_FALSE:
        return False
    if kind == K_VAR:
        try:
            return bool(valuation[f.var])
        except KeyError:
            raise UnknownVariableError(f"valuation does not cover {f.var.name}") from None
    if kind == K_PARAM:
        raise TemplateAtomError(f"cannot evaluate parameter atom {f.pname}(${f.pindex})")
    if kind == K_NOT:
        return not evaluate(f.children[0], valuation)
    if kind == K_AND:
        return all(evaluate(c, valuation) for c in f.children)
    if kind == K_OR:
        return any(evaluate(c, valuation) for c in f.children)
    # exactly-k
    n = sum(evaluate(c, valuation) for c in f.children)
    return n == f.k


def _rebuild(f: Formula, leaf: Callable[[Formula], Formula]) -> Formula:
    if f.kind in (K_VAR, K_PARAM):
        return leaf(f)
    if not f.children:
        return f
    ch = tuple(_rebuild(c, leaf) for c in f.children)
    if ch == f.children:
        return f
    return _mk(f.kind, var=f.var, pname=f.pname, pindex=f.pindex, k=f.k, children=ch)


def apply_permutation(f: Formula, perm: Mapping[Variable, Variable]) -> Formula:
    """Substitute every variable x with perm[x].  perm must be a bijection."""
    if len(set(perm.values())) != len(perm):
        raise PermutationError("variable permutation is not injective")

    def leaf(node):
        if node.kind == K_PARAM:
            return node
        try:
            return var_(perm[node.var])
        except KeyError:
            raise UnknownVariableError(
                f"permutation does not cover {node.var.name}") from None

    return _rebuild(f, leaf)


def substitute(f: Formula, assignment: Mapping[Variable, bool]) -> Formula:
    """Replace variables by constants and fold; the result is canonical."""

    def leaf(node):
        if node.kind == K_PARAM:
            return node
        if node.var in assignment:
            return TRUE if assignment[node.var] else FALSE
        return node

    return canonicalize(_rebuild(f, leaf))


def instantiate(f: Formula, resolver: Callable[[str, int], Variable],
                memo: dict | None = None) -> Formula:
    """Replace each parameter atom attr($j) by resolver(attr, j); canonical.

    A memo dict (valid for one resolver only) lets shared template
    subformulas be instantiated once.
    """
    if memo is None:
        memo = {}

    def walk(node: Formula) -> Formula:
        hit = memo.get(node)
        if hit is not None:
            return hit
        if node.kind == K_PARAM:
            out = var_(resolver(node.pname, node.pindex))
        elif not node.children:
            out = node
        else:
            ch = tuple(walk(c) for c in node.children)
            out = node if ch == node.children else _mk(
                node.kind, var=node.var, pname=node.pname,
                pindex=node.pindex, k=node.k, children=ch)
        memo[node] = out
        return out

    return canonicalize(walk(f))


# ---------------------------------------------------------------------------
# bulk evaluation over an enumerated model space
# ---------------------------------------------------------------------------

def evaluate_over_masks(f: Formula, var_masks: Mapping[Variable, int],
                        full_mask: int, memo: dict | None = None) -> int:
    """Evaluate f simultaneously on a finite valuation family.

    ``var_masks[x]`` holds a bitmask whose i-th bit says whether valuation i
    sets x to true; the result marks the valuations satisfying f.  Counting
    nodes use a bit-parallel saturating counter.
    """
    if memo is not None and f in memo:
        return memo[f]
    kind = f.kind
    if kind == K_TRUE:
        res = full_mask
    elif kind == K_FALSE:
        res = 0
    elif kind == K_VAR:
        try:
            res = var_masks[f.var]
        except KeyError:
            raise UnknownVariableError(f"mask table does not cover {f.var.name}") from None
    elif kind == K_PARAM:
        raise TemplateAtomError(f"cannot evaluate parameter atom {f.pname}(${f.pindex})")
    elif kind == K_NOT:
        res = full_mask & ~evaluate_over_masks(f.children[0], var_masks, full_mask, memo)
    elif kind == K_AND:
        res = full_mask
        for c in f.children:
            res &= evaluate_over_masks(c, var_masks, full_mask, memo)
            if not res:
                break
    elif kind == K_OR:
        res = 0
        for c in f.children:
            res |= evaluate_over_masks(c, var_masks, full_mask, memo)
            if res == full_mask:
                break
    else:  # exactly-k: states[j] = valuations with exactly j true children so far
        k = f.k
        states = [full_mask] + [0] * (k + 1)
        for c in f.children:
            cm = evaluate_over_masks(c, var_masks, full_mask, memo)
            ncm = ~cm
            nxt = [states[0] & ncm]
            for j in range(1, k + 1):
                nxt.append((states[j] & ncm) | (states[j - 1] & cm))
            # saturate counts above k
            nxt.append(states[k + 1] | (states[k] & cm))
            states = nxt
        res = states[k]
    if memo is not None:
        memo[f] = res
    return res


# ---------------------------------------------------------------------------
# CNF compilation
# ---------------------------------------------------------------------------

class Cnf:
    """A clause set plus the variable numbering used to produce it.

    Variables of the declared set get ids 1..n in order; auxiliary variables
    introduced by the encoding get larger ids.  Every auxiliary variable is
    functionally determined by the original ones, so restricting the models
    of ``clauses`` to ids 1..n yields exactly the models of the source
    formula.
    """

    def __init__(self, variables: Sequence[Variable]):
        self.variables = tuple(variables)
        self.var_ids = {v: i for i, v in enumerate(self.variables, start=1)}
        if len(self.var_ids) != len(self.variables):
            raise ValueError("duplicate variable in declared set")
        self.n_original = len(self.variables)
        self.n_vars = self.n_original
        self.clauses: list[list[int]] = []
        self.aux_defs: dict[int, str] = {}

    def new_aux(self, note: str = "") -> int:
        self.n_vars += 1
        if note:
            self.aux_defs[self.n_vars] = note
        return self.n_vars

    def add(self, clause: list[int]) -> None:
        self.clauses.append(clause)


def to_cnf(f: Formula, declared: Sequence[Variable] | None = None) -> Cnf:
    """Compile to an equisatisfiable clause set (Tseitin-style).

    Counting operators use a sequential-counter ladder, so the encoding stays
    polynomial and projected model counts are undistorted.
    """
    f = canonicalize(f)
    if param_atoms(f):
        raise TemplateAtomError("cannot compile a template with parameter atoms")
    if declared is None:
        declared = sorted(variables(f))
    cnf = Cnf(declared)
    missing = variables(f) - set(cnf.var_ids)
    if missing:
        names = ", ".join(sorted(v.name for v in missing))
        raise UnknownVariableError(f"declared variable set does not cover: {names}")
    if f.is_true:
        return cnf
    if f.is_false:
        cnf.add([])
        return cnf
    root = _encode(f, cnf, {})
    cnf.add([root])
    return cnf


def _encode(f: Formula, cnf: Cnf, memo: dict) -> int:
    if f in memo:
        return memo[f]
    kind = f.kind
    if kind == K_VAR:
        lit = cnf.var_ids[f.var]
    elif kind == K_NOT:
        lit = -_encode(f.children[0], cnf, memo)
    elif kind == K_AND:
        lits = [_encode(c, cnf, memo) for c in f.children]
        a = cnf.new_aux("and")
        for l in lits:
            cnf.add([-a, l])
        cnf.add([a] + [-l for l in lits])
        lit = a
    elif kind == K_OR:
        lits = [_encode(c, cnf, memo) for c in f.children]
        a = cnf.new_aux("or")
        cnf.add([-a] + lits)
        for l in lits:
            cnf.add([-l, a])
        lit = a
    elif kind == K_EXACTLY:
        lits = [_encode(c, cnf, memo) for c in f.children]
        lit = _encode_exactly(f.k, lits, cnf)
    else:  # pragma: no cover - constants are folded before encoding
        raise AssertionError("constant inside canonical non-constant formula")
    memo[f] = lit
    return lit


def _encode_exactly(k: int, lits: list[int], cnf: Cnf) -> int:
    """Sequential counter; returns a literal true iff exactly k inputs hold."""
    m = len(lits)
    cap = min(m, k + 1)  # counting beyond k+1 never matters
    # prev[j-1] is a literal for "at least j of the first i inputs"; entries
    # past the end of the row are logically false.
    prev: list[int] = []
    for i, lit in enumerate(lits, start=1):
        width = min(i, cap)
        row: list[int] = []
        for j in range(1, width + 1):
            above = prev[j - 1] if j - 1 < len(prev) else None  # >= j among first i-1
            if j == 1:
                if above is None:  # i == 1: "at least 1 of (lit)" is lit itself
                    row.append(lit)
                    continue
                s = cnf.new_aux(f"ge1@{i}")
                cnf.add([-s, above, lit])
                cnf.add([-above, s])
                cnf.add([-lit, s])
            else:
                below = prev[j - 2]  # >= j-1 among first i-1; always present here
                s = cnf.new_aux(f"ge{j}@{i}")
                if above is None:  # j == i
                    cnf.add([-s, below])
                    cnf.add([-s, lit])
                    cnf.add([-below, -lit, s])
                else:
                    cnf.add([-s, above, below])
                    cnf.add([-s, above, lit])
                    cnf.add([-above, s])
                    cnf.add([-below, -lit, s])
            row.append(s)
        prev = row
    ge_k1 = prev[k] if k < len(prev) else None
    if k == 0:
        # "exactly none": ge_k1 exists because m >= 1
        return -prev[0]
    ge_k = prev[k - 1]
    if ge_k1 is None:
        return ge_k
    r = cnf.new_aux(f"eq{k}")
    cnf.add([-r, ge_k])
    cnf.add([-r, -ge_k1])
    cnf.add([-ge_k, ge_k1, r])
    return r


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

def pretty(f: Formula) -> str:
    """Text form of a formula in the game-file syntax."""
    kind = f.kind
    if kind == K_TRUE:
        return "true"
    if kind == K_FALSE:
        return "false"
    if kind == K_VAR:
        return f.var.name
    if kind == K_PARAM:
        return f"{f.pname}(${f.pindex})"
    if kind == K_NOT:
        return "!" + _wrap(f.children[0])
    if kind == K_AND:
        return " & ".join(_wrap(c) for c in f.children)
    if kind == K_OR:
        return " | ".join(_wrap(c) for c in f.children)
    return f"exactly{f.k}(" + ", ".join(pretty(c) for c in f.children) + ")"


def _wrap(f: Formula) -> str:
    if f.kind in (K_AND, K_OR):
        return "(" + pretty(f) + ")"
    return pretty(f)
