"""Acceptance suite: every criterion prints one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they
complete.  The round-2 reduction-size target is a stretch goal and is
marked xfail: a miss is reported, not fatal.
"""
import itertools
import math
import random
import time
from fractions import Fraction

import pytest

from cobra import satcore, symmetry, synth
from cobra.formula import (Variable, and_, canonicalize, evaluate, exactly,
                           not_, or_, var_, variables)
from cobra.gamedsl import from_spec, gen_ccp, gen_mastermind
from cobra.synth import OptimalSearch, build_ranking_tree, eval_complexity
from bruteforce import (all_valuations, brute_fixed, brute_optimal,
                        truth_table_models)


def report(criterion: str, ok: bool, detail: str) -> bool:
    print(f"\nACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
    return ok


def close(value, printed: float, tol: float = 5e-6) -> bool:
    return abs(float(value) - printed) <= tol


# -- 1: optimal table for classic Mastermind ---------------------------------

MM_TABLE = [((2, 8), 3.67187, 5), ((3, 6), 3.19444, 4), ((4, 4), 2.78516, 3)]


@pytest.mark.parametrize("size,avg_ref,worst_ref", MM_TABLE)
def test_criterion_1_mastermind_optimal(size, avg_ref, worst_ref):
    pegs, colors = size
    game = gen_mastermind(pegs, colors)
    worst = OptimalSearch(game, "worst").optimal_cost()
    avg = OptimalSearch(game, "avg").optimal_cost()
    ok = worst == worst_ref and close(avg, avg_ref)
    assert report(f"1 (mm:{pegs}:{colors})", ok,
                  f"optimal avg {float(avg):.6f} (ref {avg_ref}), "
                  f"worst {worst} (ref {worst_ref})")


# -- 2: the variant table ------------------------------------------------------

VARIANT_TABLE = [
    ("col", (2, 8), 3.64062, 5), ("col", (3, 6), 3.18981, 4),
    ("col", (4, 4), 2.74609, 3),
    ("pos", (2, 8), 2.0, 2), ("pos", (3, 6), 3.0, 3),
    ("pos", (4, 4), 2.78516, 3),
]


@pytest.mark.parametrize("variant,size,avg_ref,worst_ref", VARIANT_TABLE)
def test_criterion_2_variants(variant, size, avg_ref, worst_ref):
    pegs, colors = size
    game = gen_mastermind(pegs, colors, variant)
    worst = OptimalSearch(game, "worst").optimal_cost()
    avg = OptimalSearch(game, "avg").optimal_cost()
    ok = worst == worst_ref and close(avg, avg_ref)
    assert report(f"2 (mm:{pegs}:{colors}:{variant})", ok,
                  f"optimal avg {float(avg):.6f} (ref {avg_ref}), "
                  f"worst {worst} (ref {worst_ref})")


# -- 3: coin-weighing worst cases match the information bound -----------------

def _weighing_bound(n: int) -> int:
    w = 1
    while n > (3 ** w - 3) // 2:
        w += 1
    return w


def test_criterion_3_ccp_worst_vs_bound():
    t0 = time.time()
    results = {}
    for n in range(3, 14):
        results[n] = OptimalSearch(gen_ccp(n), "worst").optimal_cost()
    ok = all(results[n] == _weighing_bound(n) for n in results)
    assert report("3", ok,
                  f"worst cases {results} in {time.time() - t0:.0f}s "
                  "(bound: 2 for 3 coins, 3 up to 12, 4 at 13)")


# -- 4: first-round reduction sizes -------------------------------------------

FIRST_ROUND = [("ccp:26", 13), ("ccp:39", 19), ("ccp:50", 25),
               ("mm:3:8", 3), ("mm:4:6", 5), ("mm:5:3", 5)]


@pytest.mark.parametrize("spec,want", FIRST_ROUND)
def test_criterion_4_first_round_sizes(spec, want):
    game = from_spec(spec)
    t0 = time.time()
    red = symmetry.reduce_experiments(game, game.phi0)
    dt = time.time() - t0
    ok = red.phase2_size == want and dt < 30
    assert report(f"4 ({spec})", ok,
                  f"kept {red.phase2_size} of {red.phase1_size} generated "
                  f"(ref {want}) in {dt:.1f}s")


# -- 5 (stretch): round-2 average reduction size for 26 coins -----------------

@pytest.mark.xfail(strict=False, reason="stretch target, sensitive to "
                   "enumeration-order details")
def test_criterion_5_ccp26_round2_average():
    game = gen_ccp(26)
    space = game.codespace()
    red0 = symmetry.reduce_experiments(game, game.phi0)
    best = None
    best_val = None
    for inst in red0.selected:
        val = max((space.full_mask & m).bit_count() for m in inst.outcome_masks())
        if best_val is None or val < best_val:
            best, best_val = inst, val
    sizes = []
    for idx, m in enumerate(best.outcome_masks()):
        if m == 0:
            continue
        child = canonicalize(and_([game.phi0, best.outcome_formulas()[idx]]))
        red = symmetry.reduce_experiments(game, child)
        sizes.append(red.phase2_size)
    avg = sum(sizes) / len(sizes)
    ok = abs(avg - 861.7) <= 8.617
    assert report("5 (stretch)", ok,
                  f"round-2 kept sizes {sizes}, average {avg:.1f} (ref 861.7)")


# -- 6: symmetry-reduced optima equal the exhaustive minimax ------------------

@pytest.mark.parametrize("spec", ["ccp:3", "ccp:4", "mm:2:2", "mm:2:3"])
def test_criterion_6_oracle_equivalence(spec):
    game = from_spec(spec)
    got = {}
    want = {}
    for mode in ("worst", "avg"):
        got[mode] = OptimalSearch(game, mode).optimal_cost()
        want[mode] = brute_optimal(game, mode)
    ok = got == want
    assert report(f"6 ({spec})", ok, f"reduced {got} == exhaustive {want}")


# -- 7: the property suites, re-run compactly ---------------------------------

def _random_formula(rng, pool, depth=3):
    if depth == 0 or rng.random() < 0.3:
        return var_(rng.choice(pool))
    n = rng.randint(2, 4)
    kids = [_random_formula(rng, pool, depth - 1) for _ in range(n)]
    r = rng.random()
    if r < 0.25:
        return not_(kids[0])
    if r < 0.55:
        return and_(kids)
    if r < 0.85:
        return or_(kids)
    return exactly(rng.randint(0, n), kids)


def test_criterion_7_property_suites():
    rng = random.Random(2024)
    pool = [Variable(f"q{i}") for i in range(5)]
    checks = []

    # canonicalization preserves semantics and is idempotent
    ok = True
    for _ in range(40):
        f = _random_formula(rng, pool)
        c = canonicalize(f)
        if canonicalize(c) is not c:
            ok = False
        for v in all_valuations(sorted(variables(f))):
            if evaluate(c, v) != evaluate(f, v):
                ok = False
    checks.append(("canonical form", ok))

    # model counts against truth tables; fixed-variable characterization
    ok_count = ok_fix = True
    for _ in range(30):
        f = _random_formula(rng, pool)
        vs = sorted(variables(f))
        if satcore.count_models(f, vs) != len(truth_table_models(f, vs)):
            ok_count = False
        if satcore.fixed_variables(f, vs) != brute_fixed(f, vs) \
                and satcore.is_satisfiable(f, vs):
            ok_fix = False
    checks.append(("model counting", ok_count))
    checks.append(("fixed variables", ok_fix))

    # tree partition law + simulation agreement + ranking dominance
    game = gen_ccp(4)
    space = game.codespace()
    opt_w = OptimalSearch(game, "worst").optimal_cost()
    opt_a = OptimalSearch(game, "avg").optimal_cost()
    ok_part = ok_sim = ok_dom = True
    for kind in synth.RANKINGS:
        tree = build_ranking_tree(game, kind)
        for _, node in tree.internal_nodes():
            covered = 0
            for child in node.children.values():
                if covered & child.mask:
                    ok_part = False
                covered |= child.mask
            if covered != node.mask:
                ok_part = False
        rep = eval_complexity(game, tree)
        lengths = [len(synth.simulate_play(game, tree, c)) for c in space.codes]
        if max(lengths) != rep.worst or \
                Fraction(sum(lengths), len(lengths)) != rep.avg:
            ok_sim = False
        if rep.worst < opt_w or rep.avg < opt_a:
            ok_dom = False
    checks.append(("tree partition law", ok_part))
    checks.append(("simulation agreement", ok_sim))
    checks.append(("ranking dominates optimal", ok_dom))

    ok = all(flag for _, flag in checks)
    assert report("7", ok, "; ".join(
        f"{name}: {'ok' if flag else 'FAILED'}" for name, flag in checks))


# -- 8: average-case optima over the coin-game family -------------------------

def test_criterion_8_ccp_average_family():
    values = {}
    for n in range(3, 14):
        values[n] = OptimalSearch(gen_ccp(n), "avg").optimal_cost()
    monotone = all(values[n] <= values[n + 1] for n in range(3, 13))
    bounded = True
    for n in (4, 7, 10):
        game = gen_ccp(n)
        for kind in synth.RANKINGS:
            rep = eval_complexity(game, build_ranking_tree(game, kind))
            if rep.avg < values[n]:
                bounded = False
    ok = monotone and bounded
    detail = ", ".join(f"{n}: {float(v):.4f}" for n, v in values.items())
    assert report("8", ok, f"monotone={monotone}, ranking-bounded={bounded}; "
                           f"optimal averages {detail}")
