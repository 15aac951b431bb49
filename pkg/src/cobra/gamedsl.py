"""Text format for game definitions, plus generators for the benchmark
families (counterfeit-coin and Mastermind variants).

The format, by example::

    # counterfeit coin with four coins
    VARS x1 x2 x3 x4 y
    CONSTRAINT exactly1(x1, x2, x3, x4)
    PARAMS coin1 coin2 coin3 coin4
    ATTR d { coin1 -> x1  coin2 -> x2  coin3 -> x3  coin4 -> x4 }
    EXPERIMENT weigh1 (2) INSTANCES distinct
      OUTCOME "<" (d($1) & !y) | (d($2) & y)
      OUTCOME "=" !d($1) & !d($2)
      OUTCOME ">" (d($1) & y) | (d($2) & !y)

Formulas use ``!``, ``&``, ``|``, ``exactlyK(...)``, ``true``/``false``,
variable names and parameter atoms ``attr($j)``.  Implication does not
exist; ``->`` only appears inside attribute blocks.  Comments run from
``#`` to the end of the line.  The conventional file extension is
``.cobra``.
"""
from __future__ import annotations

import itertools
import re
import warnings
from dataclasses import dataclass, field

from .formula import (FALSE, TRUE, Formula, Variable, and_, canonicalize,
                      conj, disj, exactly, not_, or_, param_, pretty, var_)
from .gamemodel import (ALL_TUPLES, DISTINCT_TUPLES, Attribute, DeductiveGame,
                        GameDefinitionError, InstanceSet,
                        ParameterizedExperiment, Valuation)


@dataclass(frozen=True)
class GameSource:
    """A textual game definition and where it came from."""
    text: str
    origin: str = "<string>"


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    message: str
    line: int
    column: int

    def __str__(self):
        return f"{self.severity}: {self.message} (line {self.line}, column {self.column})"


@dataclass
class ParseResult:
    game: DeductiveGame | None
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.game is not None


# ---------------------------------------------------------------------------
# tokenizer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<string>"[^"\n]*")
  | (?P<arrow>->)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[(){},$!&|])
""", re.VERBOSE)

_KEYWORDS = {"VARS", "CONSTRAINT", "PARAMS", "ATTR", "EXPERIMENT",
             "INSTANCES", "OUTCOME"}


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


class _ParseAbort(Exception):
    pass


def _tokenize(text: str) -> tuple[list[_Tok], list[Diagnostic]]:
    toks: list[_Tok] = []
    diags: list[Diagnostic] = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            diags.append(Diagnostic("error", f"unexpected character {text[pos]!r}", line, col))
            return toks, diags
        kind = m.lastgroup
        tok = m.group()
        if kind == "nl":
            line += 1
            col = 1
        elif kind in ("ws", "comment"):
            col += len(tok)
        else:
            toks.append(_Tok(kind, tok, line, col))
            col += len(tok)
        pos = m.end()
    toks.append(_Tok("eof", "", line, col))
    return toks, diags


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

class _Parser:
    def __init__(self, toks: list[_Tok]):
        self.toks = toks
        self.i = 0
        self.diags: list[Diagnostic] = []

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def error(self, message: str, tok: _Tok | None = None):
        tok = tok or self.peek()
        self.diags.append(Diagnostic("error", message, tok.line, tok.col))
        raise _ParseAbort()

    def expect_keyword(self, kw: str) -> _Tok:
        t = self.peek()
        if t.kind != "ident" or t.text != kw:
            self.error(f"expected {kw}", t)
        return self.next()

    def expect(self, kind: str, what: str) -> _Tok:
        t = self.peek()
        if t.kind != kind:
            self.error(f"expected {what}", t)
        return self.next()

    def at_keyword(self) -> bool:
        t = self.peek()
        return t.kind == "ident" and t.text in _KEYWORDS

    # -- formula grammar ---------------------------------------------------

    def formula(self, ctx: "_FormulaCtx") -> Formula:
        f = self.or_expr(ctx)
        if self.peek().kind == "arrow":
            self.error("implication is not allowed; rewrite with !, & and |")
        return f

    def or_expr(self, ctx) -> Formula:
        parts = [self.and_expr(ctx)]
        while self.peek().text == "|":
            self.next()
            parts.append(self.and_expr(ctx))
        return parts[0] if len(parts) == 1 else or_(parts)

    def and_expr(self, ctx) -> Formula:
        parts = [self.unary(ctx)]
        while self.peek().text == "&":
            self.next()
            parts.append(self.unary(ctx))
        return parts[0] if len(parts) == 1 else and_(parts)

    def unary(self, ctx) -> Formula:
        if self.peek().text == "!":
            self.next()
            return not_(self.unary(ctx))
        return self.atom(ctx)

    def atom(self, ctx) -> Formula:
        t = self.peek()
        if t.text == "(":
            self.next()
            f = self.formula(ctx)
            self.expect("punct", "')'")
            return f
        if t.kind != "ident":
            self.error("expected a formula atom", t)
        m = re.fullmatch(r"exactly(\d+)", t.text)
        if m:
            self.next()
            k = int(m.group(1))
            if self.peek().text != "(":
                self.error("expected '(' after exactly")
            self.next()
            args = [self.formula(ctx)]
            while self.peek().text == ",":
                self.next()
                args.append(self.formula(ctx))
            if self.peek().text != ")":
                self.error("expected ')'")
            self.next()
            if k > len(args):
                self.error(f"exactly{k} needs at least {k} operands", t)
            return exactly(k, args)
        if t.text == "true":
            self.next()
            return TRUE
        if t.text == "false":
            self.next()
            return FALSE
        self.next()
        if self.peek().text == "(":
            # attribute atom attr($j)
            self.next()
            if self.peek().text != "$":
                self.error("expected '$' in parameter atom")
            self.next()
            j = int(self.expect("int", "parameter index").text)
            self.expect("punct", "')'")
            if t.text not in ctx.attrs:
                self.error(f"unknown attribute {t.text}", t)
            if ctx.arity is None:
                self.error("parameter atoms are not allowed here", t)
            if not 1 <= j <= ctx.arity:
                self.error(f"parameter index ${j} exceeds the experiment arity", t)
            return param_(t.text, j)
        if t.text not in ctx.vars:
            self.error(f"undeclared variable {t.text}", t)
        return var_(t.text)

    # -- game grammar ------------------------------------------------------

    def game(self, origin: str) -> DeductiveGame:
        self.expect_keyword("VARS")
        varnames = self.ident_list("variable name")
        vars_ = [Variable(n) for n in varnames]
        ctx = _FormulaCtx(vars=set(varnames), attrs=set(), arity=None)

        self.expect_keyword("CONSTRAINT")
        phi0 = self.formula(ctx)

        self.expect_keyword("PARAMS")
        params = self.ident_list("parameter name")

        attrs: list[Attribute] = []
        while self.peek().kind == "ident" and self.peek().text == "ATTR":
            self.next()
            name = self.expect("ident", "attribute name").text
            self.expect("punct", "'{'")
            mapping: dict[str, Variable] = {}
            while self.peek().text != "}":
                ptok = self.expect("ident", "parameter name")
                if ptok.text not in params:
                    self.error(f"undeclared parameter {ptok.text}", ptok)
                self.expect("arrow", "'->'")
                vtok = self.expect("ident", "variable name")
                if vtok.text not in ctx.vars:
                    self.error(f"undeclared variable {vtok.text}", vtok)
                if ptok.text in mapping:
                    self.error(f"parameter {ptok.text} mapped twice", ptok)
                mapping[ptok.text] = Variable(vtok.text)
            self.next()  # }
            missing = [p for p in params if p not in mapping]
            if missing:
                self.error(f"attribute {name} does not map: {', '.join(missing)}")
            attrs.append(Attribute(name, mapping))
            ctx.attrs.add(name)
        if not attrs:
            self.error("expected at least one ATTR block")

        experiments: list[ParameterizedExperiment] = []
        while self.peek().kind == "ident" and self.peek().text == "EXPERIMENT":
            self.next()
            name = self.expect("ident", "experiment name").text
            self.expect("punct", "'('")
            arity = int(self.expect("int", "arity").text)
            self.expect("punct", "')'")
            self.expect_keyword("INSTANCES")
            kind_tok = self.expect("ident", "'distinct' or 'all'")
            if kind_tok.text == "distinct":
                kind = DISTINCT_TUPLES
            elif kind_tok.text == "all":
                kind = ALL_TUPLES
            else:
                self.error("expected 'distinct' or 'all'", kind_tok)
            outcomes: list[tuple[str, Formula]] = []
            ctx.arity = arity
            while self.peek().kind == "ident" and self.peek().text == "OUTCOME":
                self.next()
                if self.peek().kind == "string":
                    label = self.next().text[1:-1]
                else:
                    label = str(len(outcomes))
                outcomes.append((label, self.formula(ctx)))
            ctx.arity = None
            if not outcomes:
                self.error(f"experiment {name} needs at least one OUTCOME")
            experiments.append(ParameterizedExperiment(
                name, InstanceSet(arity, kind), outcomes))
        if not experiments:
            self.error("expected at least one EXPERIMENT block")
        if self.peek().kind != "eof":
            self.error("unexpected trailing input")

        try:
            return DeductiveGame(origin, vars_, phi0, params, attrs, experiments)
        except GameDefinitionError as e:
            self.error(str(e), self.toks[0])

    def ident_list(self, what: str) -> list[str]:
        names = []
        first = self.expect("ident", what)
        if first.text in _KEYWORDS:
            self.error(f"expected {what}", first)
        names.append(first.text)
        while self.peek().kind == "ident" and not self.at_keyword():
            names.append(self.next().text)
        seen = set()
        for n in names:
            if n in seen:
                self.error(f"duplicate {what} {n}")
            seen.add(n)
        return names


@dataclass
class _FormulaCtx:
    vars: set[str]
    attrs: set[str]
    arity: int | None


def parse(src: GameSource | str, origin: str = "<string>") -> ParseResult:
    """Parse a game definition; diagnostics instead of exceptions."""
    if isinstance(src, str):
        src = GameSource(src, origin)
    toks, diags = _tokenize(src.text)
    if diags:
        return ParseResult(None, diags)
    parser = _Parser(toks)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            game = parser.game(src.origin)
        except _ParseAbort:
            return ParseResult(None, parser.diags)
    for w in caught:
        parser.diags.append(Diagnostic("warning", str(w.message), 1, 1))
    return ParseResult(game, parser.diags)


def load_game(path: str) -> ParseResult:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        return ParseResult(None, [Diagnostic("error", str(e), 0, 0)])
    return parse(GameSource(text, origin=path))


# ---------------------------------------------------------------------------
# serializer
# ---------------------------------------------------------------------------

def serialize(game: DeductiveGame) -> str:
    """Render a game in the textual format (reparses to an equal game)."""
    out = []
    out.append("VARS " + " ".join(v.name for v in game.variables))
    out.append("CONSTRAINT " + pretty(game.phi0))
    out.append("PARAMS " + " ".join(game.params))
    for a in game.attributes:
        entries = "  ".join(f"{p} -> {a.mapping[p].name}" for p in game.params)
        out.append(f"ATTR {a.name} {{ {entries} }}")
    for t in game.experiments:
        out.append(f"EXPERIMENT {t.name} ({t.arity}) INSTANCES {t.instances.kind}")
        for label, tpl in zip(t.outcome_labels, t.templates):
            out.append(f'  OUTCOME "{label}" {pretty(tpl)}')
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def gen_ccp(n_coins: int) -> DeductiveGame:
    """Counterfeit-coin game: one of n coins is lighter or heavier; weigh
    m-versus-m coins for every m up to n // 2."""
    if n_coins < 3:
        warnings.warn(f"the {n_coins}-coin game cannot be solved (three coins "
                      "is the smallest solvable size)")
    xs = [Variable(f"x{i}") for i in range(1, n_coins + 1)]
    y = Variable("y")
    coins = [f"coin{i}" for i in range(1, n_coins + 1)]
    d = Attribute("d", {coins[i]: xs[i] for i in range(n_coins)})
    phi0 = exactly(1, [var_(x) for x in xs])

    experiments = []
    for m in range(1, n_coins // 2 + 1):
        left = disj([param_("d", j) for j in range(1, m + 1)])
        right = disj([param_("d", j) for j in range(m + 1, 2 * m + 1)])
        lighter = or_([and_([left, not_(var_(y))]), and_([right, var_(y)])])
        balanced = conj([not_(param_("d", j)) for j in range(1, 2 * m + 1)])
        heavier = or_([and_([left, var_(y)]), and_([right, not_(var_(y))])])
        experiments.append(ParameterizedExperiment(
            f"weigh{m}", InstanceSet(2 * m, DISTINCT_TUPLES),
            [("<", lighter), ("=", balanced), (">", heavier)]))

    def describe(v: Valuation) -> str:
        coin = next(i + 1 for i, x in enumerate(xs) if v[x])
        return f"coin {coin}, {'heavier' if v[y] else 'lighter'}"

    return DeductiveGame(f"ccp:{n_coins}", xs + [y], phi0, coins, [d],
                         experiments, describe_code=describe)


def _mm_colors(n_colors: int) -> list[str]:
    if n_colors <= 26:
        return [chr(ord("A") + j) for j in range(n_colors)]
    return [f"c{j + 1}" for j in range(n_colors)]


def gen_mastermind(pegs: int, colors: int, variant: str = "classic") -> DeductiveGame:
    """Mastermind with the usual black/white marker replies.

    ``variant`` adds extra experiments: ``col`` asks which pegs carry a
    given color, ``pos`` asks for the exact color of a given peg.  Plays end
    as soon as the code is determined, so no final confirming guess is
    counted.
    """
    if variant not in ("classic", "col", "pos"):
        raise ValueError(f"unknown variant {variant!r}")
    if pegs < 1 or colors < 1:
        raise ValueError("need at least one peg and one color")
    names = _mm_colors(colors)
    xs = {(i, c): Variable(f"p{i}{c}" if len(c) == 1 else f"p{i}_{c}")
          for i in range(1, pegs + 1) for c in names}
    attrs = [Attribute(f"peg{i}", {c: xs[(i, c)] for c in names})
             for i in range(1, pegs + 1)]
    phi0 = conj([exactly(1, [var_(xs[(i, c)]) for c in names])
                 for i in range(1, pegs + 1)])

    # matched_at_least[m]: some m guess slots can be matched to m distinct
    # code pegs of the slot colors; instantiation keeps this correct when the
    # guess repeats colors.
    def matched_at_least(m: int) -> Formula:
        if m == 0:
            return TRUE
        terms = []
        for slots in itertools.combinations(range(1, pegs + 1), m):
            for assigned in itertools.permutations(range(1, pegs + 1), m):
                terms.append(conj([param_(f"peg{p}", s)
                                   for s, p in zip(slots, assigned)]))
        return disj(terms)

    match_formulas = [matched_at_least(m) for m in range(pegs + 2)]
    outcomes = []
    for b in range(pegs + 1):
        for w in range(pegs - b + 1):
            if b == pegs - 1 and w == 1:
                continue  # impossible reply
            m = b + w
            black = exactly(b, [param_(f"peg{i}", i) for i in range(1, pegs + 1)])
            parts = [black, match_formulas[m]]
            if m < pegs:
                parts.append(not_(match_formulas[m + 1]))
            outcomes.append((f"{b}b{w}w", conj(parts)))
    experiments = [ParameterizedExperiment(
        "guess", InstanceSet(pegs, ALL_TUPLES), outcomes)]

    if variant == "col":
        col_outcomes = []
        for subset in itertools.chain.from_iterable(
                itertools.combinations(range(1, pegs + 1), r) for r in range(pegs + 1)):
            inside = [param_(f"peg{i}", 1) for i in subset]
            outside = [not_(param_(f"peg{i}", 1)) for i in range(1, pegs + 1)
                       if i not in subset]
            label = "pegs:" + ("".join(str(i) for i in subset) or "-")
            col_outcomes.append((label, conj(inside + outside)))
        experiments.append(ParameterizedExperiment(
            "wherecolor", InstanceSet(1, ALL_TUPLES), col_outcomes))
    elif variant == "pos":
        # outcome j reveals that the queried peg has the j-th parameter's
        # color; instances range over the orderings of the full palette
        for i in range(1, pegs + 1):
            pos_outcomes = [(f"col=${j}", param_(f"peg{i}", j))
                            for j in range(1, colors + 1)]
            experiments.append(ParameterizedExperiment(
                f"whichcolor{i}", InstanceSet(colors, DISTINCT_TUPLES), pos_outcomes))

    def describe(v: Valuation) -> str:
        return "".join(next(c for c in names if v[xs[(i, c)]])
                       for i in range(1, pegs + 1))

    suffix = "" if variant == "classic" else f":{variant}"
    return DeductiveGame(f"mm:{pegs}:{colors}{suffix}",
                         [xs[(i, c)] for i in range(1, pegs + 1) for c in names],
                         phi0, names, attrs, experiments, describe_code=describe)


def from_spec(spec: str) -> DeductiveGame:
    """Build a game from a generator spec: ``ccp:N`` or ``mm:P:C[:col|:pos]``."""
    parts = spec.split(":")
    if parts[0] == "ccp" and len(parts) == 2:
        return gen_ccp(int(parts[1]))
    if parts[0] == "mm" and len(parts) in (3, 4):
        variant = parts[3] if len(parts) == 4 else "classic"
        return gen_mastermind(int(parts[1]), int(parts[2]), variant)
    raise ValueError(f"bad generator spec {spec!r} (use ccp:N or mm:P:C[:col|:pos])")
