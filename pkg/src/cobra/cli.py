"""Command-line front end.

Subcommands: ``check`` (well-formedness), ``solve`` (synthesize a strategy
and report its complexity), ``bench`` (per-round symmetry-reduction sizes),
``simulate`` (play a strategy against secrets), ``play`` (interactive
assistant).  Games come from a ``.cobra`` file or a generator spec
(``--gen ccp:N`` / ``--gen mm:P:C[:col|:pos]``).

Exit codes: 0 success, 1 domain failure (ill-formed game, unsolvable),
2 input error (unreadable file, parse error, bad secret), 3 resource or
depth cap exceeded.  The environment variable ``COBRA_MODEL_CAP`` overrides
the model-enumeration cap.
"""
from __future__ import annotations

import argparse
import csv
import os
import random
import sys
from fractions import Fraction

from . import gamedsl, symmetry, synth
from .formula import evaluate
from .gamemodel import (DeductiveGame, GameError, Valuation,
                        check_well_formed)
from .satcore import ModelCapExceeded

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_INPUT = 2
EXIT_RESOURCE = 3

STRATEGIES = synth.RANKINGS + ("optimal-worst", "optimal-avg")


def _model_cap() -> int | None:
    raw = os.environ.get("COBRA_MODEL_CAP")
    if not raw:
        return None
    try:
        return int(raw)
    except ValueError:
        print(f"ignoring non-numeric COBRA_MODEL_CAP={raw!r}", file=sys.stderr)
        return None


class _CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _load_game(args) -> DeductiveGame:
    if args.gen:
        try:
            game = gamedsl.from_spec(args.gen)
        except ValueError as e:
            raise _CliError(EXIT_INPUT, str(e))
    else:
        if not args.game:
            raise _CliError(EXIT_INPUT, "provide a game file or --gen SPEC")
        result = gamedsl.load_game(args.game)
        for d in result.diagnostics:
            print(f"{args.game}: {d}", file=sys.stderr)
        if not result.ok:
            raise _CliError(EXIT_INPUT, "the game definition did not parse")
        game = result.game
    try:
        game.codespace(cap=_model_cap())
    except ModelCapExceeded as e:
        raise _CliError(EXIT_RESOURCE, str(e))
    return game


def _add_game_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("game", nargs="?", help="game definition file (.cobra)")
    p.add_argument("--gen", metavar="SPEC",
                   help="generate a game: ccp:N or mm:P:C[:col|:pos]")


def _fmt_avg(avg: Fraction, exact: bool) -> str:
    if exact:
        return f"{avg.numerator}/{avg.denominator}"
    return synth.round_half_up(avg, 5)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_check(args) -> int:
    game = _load_game(args)
    reps = symmetry.experiments_for(game, game.phi0)
    print(f"{game.name}: {len(game.codespace())} codes, "
          f"{len(game.experiments)} parameterized experiments, "
          f"{len(reps)} representative instances")
    if args.dump_graph:
        os.makedirs(args.dump_graph, exist_ok=True)
        base, _, _ = symmetry.build_base_graph(game)
        with open(os.path.join(args.dump_graph, "base.dot"), "w") as fh:
            fh.write(base.to_dot("base"))
        space = game.codespace()
        fixed = space.fixed_from_mask(space.full_mask)
        for i, inst in enumerate(reps):
            g = symmetry.experiment_graph(game, game.phi0, fixed, inst)
            with open(os.path.join(args.dump_graph, f"exp{i}.dot"), "w") as fh:
                fh.write(g.to_dot(f"exp{i}"))
        print(f"graphs written to {args.dump_graph}/")
    report = check_well_formed(game, reps)
    if report.ok:
        print("well-formed: every code selects exactly one outcome of every experiment")
        return EXIT_OK
    inst = report.witness_instance
    v = report.witness_valuation
    hits = [i for i, f in enumerate(inst.outcome_formulas()) if evaluate(f, v)]
    print(f"NOT well-formed: code {game.describe_code(v)} makes "
          f"{len(hits)} outcomes of {inst.label} true")
    return EXIT_DOMAIN


def cmd_solve(args) -> int:
    game = _load_game(args)
    try:
        tree = synth.build_strategy_tree(game, args.strategy, args.max_depth)
    except synth.NonTerminatingStrategyError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    except synth.UnsolvableGameError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    report = synth.eval_complexity(game, tree)
    print(f"{game.name} {args.strategy}: "
          f"avg {_fmt_avg(report.avg, args.exact)} worst {report.worst}")
    if args.export_dot:
        with open(args.export_dot, "w") as fh:
            fh.write(synth.tree_to_dot(tree))
        print(f"decision tree written to {args.export_dot}")
    if args.export_json:
        with open(args.export_json, "w") as fh:
            fh.write(synth.tree_to_json(tree))
        print(f"decision tree written to {args.export_json}")
    return EXIT_OK


def cmd_bench(args) -> int:
    game = _load_game(args)
    if args.strategy not in synth.RANKINGS:
        raise _CliError(EXIT_INPUT,
                        "bench reports per-round reduction sizes of ranking "
                        f"strategies; pick one of {', '.join(synth.RANKINGS)}")
    try:
        tree = synth.build_ranking_tree(game, args.strategy, args.max_depth)
    except synth.NonTerminatingStrategyError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    per_round: dict[int, list[tuple[int, int]]] = {}
    for depth, node in tree.internal_nodes():
        per_round.setdefault(depth + 1, []).append(
            (node.phase1_size, node.phase2_size))
    rows = []
    for rnd in sorted(per_round):
        sizes = per_round[rnd]
        s1 = sum(a for a, _ in sizes) / len(sizes)
        s2 = sum(b for _, b in sizes) / len(sizes)
        rows.append((rnd, s1, s2))
    print("round,phase1_avg,phase2_avg")
    for rnd, s1, s2 in rows:
        print(f"{rnd},{s1:.1f},{s2:.1f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["round", "phase1_avg", "phase2_avg"])
            for rnd, s1, s2 in rows:
                w.writerow([rnd, f"{s1:.1f}", f"{s2:.1f}"])
        print(f"table written to {args.csv}")
    if args.plot:
        from . import plots
        plots.bench_plot(rows, args.plot,
                         f"{game.name}: candidate experiments per round "
                         f"({args.strategy})")
        print(f"figure written to {args.plot}")
    return EXIT_OK


def _parse_secret(game: DeductiveGame, text: str) -> Valuation:
    space = game.codespace()
    wanted = text.strip()
    for code in space.codes:
        if game.describe_code(code) == wanted:
            return code
    assignment = {}
    for part in wanted.split(","):
        part = part.strip()
        if "=" not in part:
            raise _CliError(EXIT_INPUT,
                            f"secret {text!r} is neither a code description "
                            "nor a var=0/1 assignment list")
        name, _, value = part.partition("=")
        if value.strip().lower() not in ("0", "1", "true", "false"):
            raise _CliError(EXIT_INPUT, f"bad truth value in {part!r}")
        assignment[name.strip()] = value.strip().lower() in ("1", "true")
    by_name = {v.name: v for v in game.variables}
    unknown = set(assignment) - set(by_name)
    if unknown:
        raise _CliError(EXIT_INPUT, f"unknown variables: {', '.join(sorted(unknown))}")
    matches = [c for c in space.codes
               if all(c[by_name[n]] == b for n, b in assignment.items())]
    if len(matches) != 1:
        raise _CliError(EXIT_INPUT,
                        f"secret {text!r} matches {len(matches)} codes; "
                        "it must determine exactly one")
    return matches[0]


def cmd_simulate(args) -> int:
    game = _load_game(args)
    space = game.codespace()
    tree = synth.build_strategy_tree(game, args.strategy, args.max_depth)
    if args.secret:
        secrets = [_parse_secret(game, args.secret)]
    elif args.all_secrets:
        secrets = list(space.codes)
    else:
        rng = random.Random(args.seed)
        secrets = [space.codes[rng.randrange(len(space.codes))]
                   for _ in range(args.sample)]
    lengths = []
    for secret in secrets:
        history = synth.simulate_play(game, tree, secret)
        lengths.append(len(history))
        if args.verbose or len(secrets) == 1:
            steps = "; ".join(f"{ev.instance.label} -> {ev.outcome_label}"
                              for ev in history)
            print(f"{game.describe_code(secret)}: {len(history)} experiments"
                  + (f" ({steps})" if steps else ""))
    mean = Fraction(sum(lengths), len(lengths))
    print(f"secrets {len(secrets)}  mean {_fmt_avg(mean, args.exact)}  "
          f"max {max(lengths)}")
    if args.all_secrets:
        report = synth.eval_complexity(game, tree)
        if (mean, max(lengths)) != (report.avg, report.worst):
            print("error: simulation disagrees with the tree complexity",
                  file=sys.stderr)
            return EXIT_DOMAIN
    if args.plot:
        from . import plots
        plots.lengths_plot(lengths, args.plot,
                           f"{game.name}: play lengths ({args.strategy})")
        print(f"figure written to {args.plot}")
    return EXIT_OK


def cmd_play(args) -> int:
    game = _load_game(args)
    tree = synth.build_strategy_tree(game, args.strategy, args.max_depth)
    space = game.codespace()
    path = [tree.root]
    print(f"playing {game.name}; answer with the outcome name or index, "
          "or: undo, models, quit")
    while True:
        node = path[-1]
        if node.is_leaf:
            print(f"the secret code is: {game.describe_code(node.valuation)}")
            return EXIT_OK
        inst = node.instance
        labels = inst.experiment.outcome_labels
        live = sorted(node.children)
        options = ", ".join(f"[{i}] {labels[i]}" for i in live)
        print(f"experiment {len(path)}: {inst.label}   outcomes: {options}")
        print(f"({node.mask.bit_count()} codes remain)")
        try:
            answer = input("> ").strip()
        except EOFError:
            print("bye")
            return EXIT_OK
        if answer == "quit":
            return EXIT_OK
        if answer == "models":
            for code in space.codes_of_mask(node.mask):
                print(" ", game.describe_code(code))
            continue
        if answer == "undo":
            if len(path) > 1:
                path.pop()
            else:
                print("nothing to undo")
            continue
        idx = None
        if answer.isdigit() and int(answer) < len(labels):
            idx = int(answer)
        else:
            for i, lab in enumerate(labels):
                if lab == answer:
                    idx = i
                    break
        if idx is None:
            print(f"unrecognized outcome {answer!r}")
            continue
        child = node.children.get(idx)
        if child is None:
            print("that outcome is inconsistent with previous answers; "
                  "please check it")
            continue
        path.append(child)


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(
        prog="cobra",
        description="model deductive codebreaking games, reduce symmetric "
                    "experiments, and synthesize strategies")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="verify that a game is well-formed")
    _add_game_args(p)
    p.add_argument("--dump-graph", metavar="DIR",
                   help="write the base and representative experiment graphs as DOT")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("solve", help="synthesize a strategy and report its cost")
    _add_game_args(p)
    p.add_argument("--strategy", default="max-models", choices=STRATEGIES)
    p.add_argument("--exact", action="store_true",
                   help="print the average as an exact fraction")
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--export-dot", metavar="PATH")
    p.add_argument("--export-json", metavar="PATH")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("bench", help="per-round symmetry-reduction sizes")
    _add_game_args(p)
    p.add_argument("--strategy", default="max-models")
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--csv", metavar="PATH")
    p.add_argument("--plot", metavar="PATH", help="render the table as a figure")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("simulate", help="play a strategy against secrets")
    _add_game_args(p)
    p.add_argument("--strategy", default="max-models", choices=STRATEGIES)
    p.add_argument("--secret", help="a code description or var=0/1 list")
    p.add_argument("--all", dest="all_secrets", action="store_true",
                   help="simulate every code")
    p.add_argument("--sample", type=int, default=10,
                   help="number of random secrets (default 10)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--exact", action="store_true")
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--plot", metavar="PATH", help="histogram of play lengths")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("play", help="interactive codebreaking assistant")
    _add_game_args(p)
    p.add_argument("--strategy", default="max-models", choices=STRATEGIES)
    p.add_argument("--max-depth", type=int, default=None)
    p.set_defaults(fn=cmd_play)

    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except _CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except ModelCapExceeded as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    except GameError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
