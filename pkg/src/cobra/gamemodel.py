"""The deductive-game data model.

A game is a tuple of propositional variables, a satisfiable initial
constraint, a parameter alphabet, attributes mapping parameters to
variables, and parameterized experiments whose outcomes are formula
templates over parameter atoms ``attr($j)``.  Binding an experiment to a
game precomputes the structural facts needed elsewhere: which attributes
appear at which template positions, whether the experiment is faithful
(its instance set is closed under the parameter swaps that justify
dominance pruning), and which template positions are interchangeable.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

from . import satcore
from .formula import (Formula, Variable, canonicalize, evaluate,
                      evaluate_over_masks, instantiate, param_atoms, pretty,
                      variables, apply_permutation, _mk, K_PARAM)


class GameError(Exception):
    pass


class GameDefinitionError(GameError):
    pass


class IllFormedGameError(GameError):
    pass


class Valuation(Mapping):
    """A total assignment of a declared variable tuple; hashable."""

    __slots__ = ("domain", "bits", "_lookup", "_hash")

    def __init__(self, domain: Sequence[Variable], values: Mapping[Variable, bool]):
        self.domain = tuple(domain)
        self.bits = tuple(bool(values[v]) for v in self.domain)
        self._lookup = {v: b for v, b in zip(self.domain, self.bits)}
        self._hash = hash((self.domain, self.bits))

    def __getitem__(self, v: Variable) -> bool:
        return self._lookup[v]

    def __iter__(self) -> Iterator[Variable]:
        return iter(self.domain)

    def __len__(self) -> int:
        return len(self.domain)

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        if isinstance(other, Valuation):
            return self.domain == other.domain and self.bits == other.bits
        if isinstance(other, Mapping):
            return dict(self) == dict(other)
        return NotImplemented

    def true_variables(self) -> frozenset:
        return frozenset(v for v, b in zip(self.domain, self.bits) if b)

    def __repr__(self):
        on = ",".join(v.name for v, b in zip(self.domain, self.bits) if b)
        return f"Valuation({{{on}}})"


class Attribute:
    """A named injective map from parameters to variables."""

    def __init__(self, name: str, mapping: Mapping[str, Variable]):
        self.name = name
        self.mapping = dict(mapping)
        self.image = frozenset(self.mapping.values())
        if len(self.image) != len(self.mapping):
            raise GameDefinitionError(f"attribute {name} is not injective")

    def __repr__(self):
        return f"Attribute({self.name})"


ALL_TUPLES = "all"
DISTINCT_TUPLES = "distinct"


@dataclass(frozen=True)
class InstanceSet:
    """Admissible parameter tuples: the full product or the repetition-free
    tuples.  Both families are closed under permutations of the alphabet."""

    arity: int
    kind: str  # ALL_TUPLES | DISTINCT_TUPLES

    def __post_init__(self):
        if self.kind not in (ALL_TUPLES, DISTINCT_TUPLES):
            raise GameDefinitionError(f"unknown instance-set kind {self.kind!r}")
        if self.arity < 0:
            raise GameDefinitionError("negative arity")

    def contains(self, p: Sequence[str]) -> bool:
        if len(p) != self.arity:
            return False
        if self.kind == DISTINCT_TUPLES:
            return len(set(p)) == len(p)
        return True

    def prefix_feasible(self, prefix: Sequence[str], alphabet_size: int) -> bool:
        """Can the prefix be extended to an admissible tuple?"""
        if len(prefix) > self.arity:
            return False
        if self.kind == DISTINCT_TUPLES:
            return len(set(prefix)) == len(prefix) and self.arity <= alphabet_size
        return True

    def iter_tuples(self, alphabet: Sequence[str]) -> Iterator[tuple[str, ...]]:
        if self.kind == DISTINCT_TUPLES:
            return itertools.permutations(alphabet, self.arity)
        return itertools.product(alphabet, repeat=self.arity)


class ParameterizedExperiment:
    """An experiment schema: arity, instance set, and outcome templates."""

    def __init__(self, name: str, instances: InstanceSet,
                 outcomes: Sequence[tuple[str, Formula]]):
        if not outcomes:
            raise GameDefinitionError(f"experiment {name} has no outcomes")
        self.name = name
        self.instances = instances
        self.outcome_labels = tuple(label for label, _ in outcomes)
        self.templates = tuple(canonicalize(t) for _, t in outcomes)
        self.arity = instances.arity
        # filled in when the experiment is bound to a game
        self.index: int = -1
        self.position_attrs: tuple[frozenset, ...] = ()
        self.used_attrs: frozenset = frozenset()
        self.raw_vars: frozenset = frozenset()
        self.touched_vars: frozenset = frozenset()
        self.faithful: bool = False
        self.prunable: bool = False
        self.position_groups: tuple[int, ...] = ()

    def __repr__(self):
        return f"ParameterizedExperiment({self.name}/{self.arity})"

    def _bind(self, game: "DeductiveGame", index: int) -> None:
        self.index = index
        atoms = frozenset().union(*(param_atoms(t) for t in self.templates)) \
            if self.templates else frozenset()
        for attr_name, j in atoms:
            if attr_name not in game.attribute_map:
                raise GameDefinitionError(
                    f"experiment {self.name}: unknown attribute {attr_name}")
            if not 1 <= j <= self.arity:
                raise GameDefinitionError(
                    f"experiment {self.name}: parameter index ${j} exceeds arity {self.arity}")
        self.position_attrs = tuple(
            frozenset(a for a, j in atoms if j == i + 1) for i in range(self.arity))
        self.used_attrs = frozenset(a for a, _ in atoms)
        self.raw_vars = frozenset().union(*(variables(t) for t in self.templates)) \
            if self.templates else frozenset()
        image_vars = frozenset().union(
            *(game.attribute_map[a].image for a in self.used_attrs)) \
            if self.used_attrs else frozenset()
        self.touched_vars = image_vars
        clash = self.raw_vars & image_vars
        if clash:
            names = ", ".join(sorted(v.name for v in clash))
            warnings.warn(
                f"experiment {self.name} mentions attribute-image variables "
                f"directly ({names}); symmetry pruning is disabled for it")
        if clash:
            self.faithful = False
        elif self.instances.kind == ALL_TUPLES:
            self.faithful = True
        else:
            # repetition-free instances: every position pair must share an
            # attribute, otherwise replacing one component can collide with
            # an unrelated position and leave the instance set
            self.faithful = self.arity <= 1 or all(
                self.position_attrs[i] & self.position_attrs[j]
                for i in range(self.arity) for j in range(i + 1, self.arity))
        uniform = self.arity == 0 or (
            all(fa == self.position_attrs[0] for fa in self.position_attrs)
            and bool(self.position_attrs[0]))
        self.prunable = self.faithful and uniform
        self.position_groups = self._position_symmetry()

    def _position_symmetry(self) -> tuple[int, ...]:
        """Group template positions that can be transposed without changing
        the template multiset; instances may then be enumerated with each
        group's parameters in ascending order."""
        k = self.arity
        parent = list(range(k))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        base = sorted(self.templates, key=id)
        for i in range(k):
            for j in range(i + 1, k):
                if find(i) == find(j):
                    continue
                swapped = sorted((_swap_template_positions(t, i + 1, j + 1)
                                  for t in self.templates), key=id)
                if swapped == base:
                    parent[find(j)] = find(i)
        return tuple(find(i) for i in range(k))


def _swap_template_positions(t: Formula, i: int, j: int) -> Formula:
    def walk(f: Formula) -> Formula:
        if f.kind == K_PARAM:
            if f.pindex == i:
                return _mk(K_PARAM, pname=f.pname, pindex=j)
            if f.pindex == j:
                return _mk(K_PARAM, pname=f.pname, pindex=i)
            return f
        if not f.children:
            return f
        ch = tuple(walk(c) for c in f.children)
        if ch == f.children:
            return f
        return _mk(f.kind, var=f.var, pname=f.pname, pindex=f.pindex, k=f.k, children=ch)

    return canonicalize(walk(t))


class ExperimentInstance:
    """A parameterized experiment applied to a concrete parameter tuple."""

    __slots__ = ("game", "experiment", "params", "_formulas", "_masks", "_hash")

    def __init__(self, game: "DeductiveGame", experiment: ParameterizedExperiment,
                 params: tuple[str, ...]):
        if not experiment.instances.contains(params):
            raise GameDefinitionError(
                f"{params} is not an admissible instance of {experiment.name}")
        self.game = game
        self.experiment = experiment
        self.params = params
        self._formulas = None
        self._masks = None
        self._hash = hash((experiment.name, params))

    def __eq__(self, other):
        return (isinstance(other, ExperimentInstance)
                and self.experiment is other.experiment
                and self.params == other.params)

    def __hash__(self):
        return self._hash

    @property
    def order_key(self) -> tuple:
        pidx = self.game.param_index
        return (self.experiment.index, tuple(pidx[p] for p in self.params))

    def outcome_formulas(self) -> tuple[Formula, ...]:
        if self._formulas is None:
            t = self.experiment
            self._formulas = tuple(
                instantiate_outcome(self.game, t, tpl, self.params)
                for tpl in t.templates)
        return self._formulas

    def outcome_masks(self) -> tuple[int, ...]:
        if self._masks is None:
            space = self.game.codespace()
            self._masks = tuple(space.mask_of(f) for f in self.outcome_formulas())
        return self._masks

    @property
    def label(self) -> str:
        if not self.params:
            return self.experiment.name
        return f"{self.experiment.name}({','.join(self.params)})"

    def __repr__(self):
        return f"ExperimentInstance({self.label})"


@dataclass(frozen=True)
class EvaluatedExperiment:
    instance: ExperimentInstance
    outcome_index: int

    def __post_init__(self):
        if not 0 <= self.outcome_index < len(self.instance.experiment.templates):
            raise GameDefinitionError("outcome index out of range")

    @property
    def outcome_label(self) -> str:
        return self.instance.experiment.outcome_labels[self.outcome_index]

    def __repr__(self):
        return f"EvaluatedExperiment({self.instance.label} -> {self.outcome_label})"


class CodeSpace:
    """The enumerated models of the initial constraint, with bitmask
    machinery: every subset of the code space is an int whose i-th bit marks
    code i."""

    def __init__(self, game: "DeductiveGame", cap: int | None = None):
        self.game = game
        models = satcore.enumerate_models(game.phi0, game.variables, cap=cap)
        self.codes: tuple[Valuation, ...] = tuple(
            Valuation(game.variables, m) for m in models)
        self.index: dict[frozenset, int] = {
            c.true_variables(): i for i, c in enumerate(self.codes)}
        self.full_mask = (1 << len(self.codes)) - 1
        self.var_true: dict[Variable, int] = {}
        for v in game.variables:
            m = 0
            for i, c in enumerate(self.codes):
                if c[v]:
                    m |= 1 << i
            self.var_true[v] = m
        self._mask_memo: dict = {}
        self._perm_memo: dict = {}

    def __len__(self):
        return len(self.codes)

    def mask_of(self, f: Formula) -> int:
        """Subset of codes satisfying f (conjunction with the initial
        constraint is implicit: only codes are considered)."""
        return evaluate_over_masks(canonicalize(f), self.var_true,
                                   self.full_mask, self._mask_memo)

    def mask_of_valuation(self, v: Valuation) -> int:
        try:
            return 1 << self.index[v.true_variables()]
        except KeyError:
            raise GameError("valuation is not a code of this game") from None

    def codes_of_mask(self, mask: int) -> list[Valuation]:
        out = []
        i = 0
        while mask:
            if mask & 1:
                out.append(self.codes[i])
            mask >>= 1
            i += 1
        return out

    def single_code(self, mask: int) -> Valuation:
        if mask.bit_count() != 1:
            raise GameError("mask does not identify a unique code")
        return self.codes[mask.bit_length() - 1]

    def fixed_from_mask(self, mask: int) -> dict[Variable, bool]:
        """Variables constant across the codes in the mask (all variables,
        arbitrarily valued False, when the mask is empty)."""
        if mask == 0:
            return {v: False for v in self.game.variables}
        fixed = {}
        for v in self.game.variables:
            tm = self.var_true[v]
            if mask & tm == mask:
                fixed[v] = True
            elif mask & tm == 0:
                fixed[v] = False
        return fixed

    def code_permutation(self, perm: Mapping[Variable, Variable]) -> tuple[int, ...]:
        """How a variable permutation acts on code indices."""
        key = tuple(sorted((a.name, b.name) for a, b in perm.items() if a != b))
        cached = self._perm_memo.get(key)
        if cached is not None:
            return cached
        out = []
        for c in self.codes:
            image = frozenset(perm.get(v, v) for v in c.true_variables())
            try:
                out.append(self.index[image])
            except KeyError:
                raise GameError(
                    "permutation does not preserve the code space") from None
        result = tuple(out)
        self._perm_memo[key] = result
        return result

    def permute_mask(self, mask: int, code_perm: Sequence[int]) -> int:
        out = 0
        i = 0
        while mask:
            if mask & 1:
                out |= 1 << code_perm[i]
            mask >>= 1
            i += 1
        return out


class DeductiveGame:
    """A deductive game; immutable after construction."""

    def __init__(self, name: str, variables_: Sequence[Variable], phi0: Formula,
                 params: Sequence[str], attributes: Sequence[Attribute],
                 experiments: Sequence[ParameterizedExperiment],
                 describe_code=None, check_satisfiable: bool = True):
        self.name = name
        self.variables = tuple(variables_)
        if len(set(self.variables)) != len(self.variables):
            raise GameDefinitionError("duplicate variables")
        self.var_set = frozenset(self.variables)
        self.phi0 = canonicalize(phi0)
        self.params = tuple(params)
        if len(set(self.params)) != len(self.params):
            raise GameDefinitionError("duplicate parameters")
        self.param_index = {p: i for i, p in enumerate(self.params)}
        self.attributes = tuple(attributes)
        self.attribute_map = {a.name: a for a in self.attributes}
        if len(self.attribute_map) != len(self.attributes):
            raise GameDefinitionError("duplicate attribute names")
        self.experiments = tuple(experiments)
        self._describe_code = describe_code
        self._codespace: CodeSpace | None = None
        self._codespace_cap: int | None = None
        self._transposition_memo: dict = {}
        self._instantiation_memo: dict = {}
        self._validate(check_satisfiable)
        for i, t in enumerate(self.experiments):
            t._bind(self, i)

    def _validate(self, check_satisfiable: bool) -> None:
        if variables(self.phi0) - self.var_set:
            raise GameDefinitionError("initial constraint uses undeclared variables")
        if param_atoms(self.phi0):
            raise GameDefinitionError("initial constraint may not contain parameter atoms")
        seen_images: set = set()
        for a in self.attributes:
            if set(a.mapping) != set(self.params):
                raise GameDefinitionError(
                    f"attribute {a.name} must map every parameter")
            if not a.image <= self.var_set:
                raise GameDefinitionError(
                    f"attribute {a.name} maps outside the variable set")
            overlap = seen_images & a.image
            if overlap:
                names = ", ".join(sorted(v.name for v in overlap))
                raise GameDefinitionError(
                    f"attribute images overlap on: {names}")
            seen_images |= a.image
        for t in self.experiments:
            for tpl in t.templates:
                undeclared = variables(tpl) - self.var_set
                if undeclared:
                    names = ", ".join(sorted(v.name for v in undeclared))
                    raise GameDefinitionError(
                        f"experiment {t.name} uses undeclared variables: {names}")
            if t.instances.kind == DISTINCT_TUPLES and t.arity > len(self.params):
                raise GameDefinitionError(
                    f"experiment {t.name}: arity exceeds the parameter count")
        if check_satisfiable and not satcore.is_satisfiable(self.phi0, self.variables):
            raise GameDefinitionError("initial constraint is unsatisfiable")

    # -- codes ---------------------------------------------------------------

    def codespace(self, cap: int | None = None) -> CodeSpace:
        if self._codespace is None or (cap is not None and cap != self._codespace_cap):
            self._codespace = CodeSpace(self, cap=cap)
            self._codespace_cap = cap
        return self._codespace

    def describe_code(self, v: Valuation) -> str:
        if self._describe_code is not None:
            return self._describe_code(v)
        on = sorted(x.name for x in v.true_variables())
        return "{" + ", ".join(on) + "}"

    # -- experiment instances -------------------------------------------------

    def instance(self, experiment: ParameterizedExperiment | str,
                 params: Sequence[str]) -> ExperimentInstance:
        if isinstance(experiment, str):
            matches = [t for t in self.experiments if t.name == experiment]
            if not matches:
                raise GameDefinitionError(f"no experiment named {experiment}")
            experiment = matches[0]
        for p in params:
            if p not in self.param_index:
                raise GameDefinitionError(f"unknown parameter {p}")
        return ExperimentInstance(self, experiment, tuple(params))

    def all_instances(self) -> Iterator[ExperimentInstance]:
        for t in self.experiments:
            for p in t.instances.iter_tuples(self.params):
                yield ExperimentInstance(self, t, p)

    # -- symmetry support -------------------------------------------------------

    def transposition_lift(self, a: str, b: str) -> dict[Variable, Variable]:
        """The variable permutation induced by swapping parameters a and b
        in every attribute (identity on all other variables)."""
        perm = {v: v for v in self.variables}
        for attr in self.attributes:
            va, vb = attr.mapping[a], attr.mapping[b]
            perm[va], perm[vb] = vb, va
        return perm

    def transposition_in_group(self, a: str, b: str) -> bool:
        """Whether the lift of (a b) maps every experiment to an experiment
        with the same outcome semantics, i.e. belongs to the game's symmetry
        group.  With instance sets closed under alphabet permutations this
        reduces to a closure check on templates that mention image variables
        directly."""
        if a == b:
            return True
        key = (a, b) if a <= b else (b, a)
        cached = self._transposition_memo.get(key)
        if cached is not None:
            return cached
        perm = self.transposition_lift(a, b)
        moved = frozenset(v for v, w in perm.items() if v is not w)
        ok = True
        for t in self.experiments:
            if not t.raw_vars & moved:
                continue
            base = sorted(t.templates, key=id)
            swapped = sorted((canonicalize(apply_permutation(tpl, perm))
                              for tpl in t.templates), key=id)
            if base != swapped:
                ok = False
                break
        self._transposition_memo[key] = ok
        return ok

    def max_outcomes(self) -> int:
        return max(len(t.templates) for t in self.experiments)

    def __repr__(self):
        return f"DeductiveGame({self.name})"


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def instantiate_outcome(game: DeductiveGame, experiment: ParameterizedExperiment,
                        template: Formula, params: Sequence[str]) -> Formula:
    """Substitute attr($j) by the variable of the j-th actual parameter."""
    if not experiment.instances.contains(tuple(params)):
        raise GameDefinitionError(
            f"{tuple(params)} is not an admissible instance of {experiment.name}")
    key = (template, tuple(params))
    cached = game._instantiation_memo.get(key)
    if cached is not None:
        return cached

    def resolve(attr_name: str, j: int) -> Variable:
        try:
            attr = game.attribute_map[attr_name]
        except KeyError:
            raise GameDefinitionError(f"unknown attribute {attr_name}") from None
        if not 1 <= j <= len(params):
            raise GameDefinitionError(
                f"parameter index ${j} out of range for {experiment.name}")
        return attr.mapping[params[j - 1]]

    result = instantiate(template, resolve)
    game._instantiation_memo[key] = result
    return result


def outcomes(instance: ExperimentInstance) -> tuple[Formula, ...]:
    """The instantiated outcome formulas of an experiment instance."""
    return instance.outcome_formulas()


@dataclass
class WellFormedReport:
    ok: bool
    witness_valuation: Valuation | None = None
    witness_instance: ExperimentInstance | None = None

    def __bool__(self):
        return self.ok


def check_well_formed(game: DeductiveGame,
                      reps: Iterable[ExperimentInstance]) -> WellFormedReport:
    """Verify that every code makes exactly one outcome of each representative
    experiment true.  ``reps`` must cover the experiment instances up to the
    equivalence induced by the game's symmetry group at the initial
    constraint (the symmetry module computes such covers)."""
    from .formula import exactly, not_, and_
    for inst in reps:
        fs = inst.outcome_formulas()
        bad = and_([game.phi0, not_(exactly(1, fs))]) if len(fs) > 1 else \
            and_([game.phi0, not_(fs[0])])
        session = satcore.FormulaSession(bad, game.variables)
        if session.satisfiable():
            witness = Valuation(game.variables, session.model())
            return WellFormedReport(False, witness, inst)
    return WellFormedReport(True)


def evaluate_experiment(game: DeductiveGame, instance: ExperimentInstance,
                        secret: Valuation) -> EvaluatedExperiment:
    """The unique outcome the codemaker reports for the given secret."""
    hits = [i for i, f in enumerate(instance.outcome_formulas())
            if evaluate(f, secret)]
    if len(hits) != 1:
        raise IllFormedGameError(
            f"{instance.label} has {len(hits)} true outcomes for "
            f"{game.describe_code(secret)}; the game is not well-formed")
    return EvaluatedExperiment(instance, hits[0])


def is_faithful(experiment: ParameterizedExperiment) -> bool:
    """Whether dominance pruning may be applied to this experiment (bound
    experiments only)."""
    if experiment.index < 0:
        raise GameError("experiment is not bound to a game")
    return experiment.faithful
