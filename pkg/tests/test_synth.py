import json
from fractions import Fraction

import pytest

from cobra import satcore, symmetry, synth
from cobra.formula import Variable, and_, canonicalize, not_, or_, var_
from cobra.gamedsl import gen_ccp, gen_mastermind
from cobra.gamemodel import Valuation
from cobra.synth import (Knowledge, OptimalSearch, build_optimal_tree,
                         build_ranking_tree, eval_complexity, optimal, rank,
                         round_half_up, simulate_play, tree_to_dot,
                         tree_to_json, updates)
from bruteforce import brute_optimal

CCP4 = gen_ccp(4)
W1 = CCP4.instance("weigh1", ("coin1", "coin2"))
W2 = CCP4.instance("weigh2", ("coin1", "coin2", "coin3", "coin4"))


def counts(game, fs):
    return [satcore.count_models(f, game.variables) for f in fs]


class TestUpdates:
    def test_single_weighing_split(self):
        assert counts(CCP4, updates(CCP4, CCP4.phi0, W1)) == [2, 4, 2]

    def test_full_weighing_split(self):
        assert counts(CCP4, updates(CCP4, CCP4.phi0, W2)) == [4, 0, 4]

    def test_unsat_members_retained(self):
        u = updates(CCP4, CCP4.phi0, W2)
        assert len(u) == 3
        assert not satcore.is_satisfiable(u[1], CCP4.variables)


class TestRank:
    def test_max_models(self):
        assert rank(CCP4, "max-models", updates(CCP4, CCP4.phi0, W1)) == 4
        assert rank(CCP4, "max-models", updates(CCP4, CCP4.phi0, W2)) == 4

    def test_exp_models_prefers_single_weighing(self):
        r1 = rank(CCP4, "exp-models", updates(CCP4, CCP4.phi0, W1))
        r2 = rank(CCP4, "exp-models", updates(CCP4, CCP4.phi0, W2))
        assert r1 == 3 and r2 == 4
        assert r1 < r2

    def test_parts(self):
        assert rank(CCP4, "parts", updates(CCP4, CCP4.phi0, W1)) == -3
        assert rank(CCP4, "parts", updates(CCP4, CCP4.phi0, W2)) == -2

    def test_min_fixed(self):
        assert rank(CCP4, "min-fixed", updates(CCP4, CCP4.phi0, W1)) == -2

    def test_undefined_rank(self):
        dead = [canonicalize(and_([var_("x1"), not_(var_("x1"))]))]
        with pytest.raises(synth.UndefinedRankError):
            rank(CCP4, "exp-models", dead)

    def test_mask_rank_agrees_with_first_principles(self):
        space = CCP4.codespace()
        for inst in (W1, W2):
            fs = updates(CCP4, CCP4.phi0, inst)
            ms = [space.mask_of(f) for f in fs]
            for kind in synth.RANKINGS:
                a = rank(CCP4, kind, fs)
                b = synth._mask_rank(kind, space, ms)
                assert a == b or abs(a - b) < 1e-12, kind


class TestRankingTrees:
    def test_ccp4_worst_depth(self):
        tree = build_ranking_tree(CCP4, "max-models")
        assert eval_complexity(CCP4, tree).worst == 3

    def test_ccp12_worst_depth(self):
        g = gen_ccp(12)
        tree = build_ranking_tree(g, "max-models")
        assert eval_complexity(g, tree).worst == 3

    def test_single_code_game_is_one_leaf(self):
        from cobra.gamemodel import (ALL_TUPLES, Attribute, DeductiveGame,
                                     InstanceSet, ParameterizedExperiment)
        from cobra.formula import param_
        x = Variable("x")
        a = Attribute("f", {"p": x})
        t = ParameterizedExperiment("t", InstanceSet(1, ALL_TUPLES),
                                    [("y", param_("f", 1)),
                                     ("n", not_(param_("f", 1)))])
        game = DeductiveGame("one", [x], var_("x"), ["p"], [a], [t])
        tree = build_ranking_tree(game, "max-models")
        assert tree.root.is_leaf
        assert eval_complexity(game, tree).worst == 0

    def test_depth_cap_raises(self):
        with pytest.raises(synth.NonTerminatingStrategyError):
            build_ranking_tree(CCP4, "max-models", max_depth=1)

    def test_partition_law(self):
        tree = build_ranking_tree(CCP4, "exp-models")
        for _, node in tree.internal_nodes():
            covered = 0
            for child in node.children.values():
                assert covered & child.mask == 0
                covered |= child.mask
            assert covered == node.mask


class TestOptimal:
    def test_ccp4_worst(self):
        assert optimal(CCP4, "worst") == 3

    def test_ccp4_avg_matches_simple_tree(self):
        assert optimal(CCP4, "avg") == Fraction(9, 4)

    def test_single_model_cost_zero(self):
        phi = canonicalize(and_([CCP4.phi0, var_("x1"), var_("y")]))
        s = OptimalSearch(CCP4, "worst")
        space = CCP4.codespace()
        assert s._search(phi, space.mask_of(phi), 10) == 0

    def test_symmetric_knowledge_shares_cache(self):
        s = OptimalSearch(CCP4, "worst")
        space = CCP4.codespace()
        phi1 = canonicalize(and_([CCP4.phi0,
                                  not_(or_([var_("x1"), var_("x2")]))]))
        phi2 = canonicalize(and_([CCP4.phi0,
                                  not_(or_([var_("x3"), var_("x4")]))]))
        c1 = s._search(phi1, space.mask_of(phi1), 10)
        hits_before = s.stats["sym_hits"]
        c2 = s._search(phi2, space.mask_of(phi2), 10)
        assert c1 == c2
        assert s.stats["sym_hits"] > hits_before

    def test_optimal_trees_realize_their_cost(self):
        for mode in ("worst", "avg"):
            tree = build_optimal_tree(CCP4, mode)
            rep = eval_complexity(CCP4, tree)
            if mode == "worst":
                assert rep.worst == 3
            else:
                assert rep.avg == Fraction(9, 4)

    @pytest.mark.parametrize("spec,mode", [
        ("ccp:3", "worst"), ("ccp:3", "avg"),
        ("ccp:5", "worst"), ("ccp:5", "avg"),
        ("mm:2:3", "worst"), ("mm:2:3", "avg"),
    ])
    def test_matches_exhaustive_minimax(self, spec, mode):
        from cobra.gamedsl import from_spec
        game = from_spec(spec)
        assert optimal(game, mode) == brute_optimal(game, mode)

    def test_ranking_never_beats_optimal(self):
        g = gen_ccp(5)
        opt_w = optimal(g, "worst")
        opt_a = optimal(g, "avg")
        for kind in synth.RANKINGS:
            rep = eval_complexity(g, build_ranking_tree(g, kind))
            assert rep.worst >= opt_w
            assert rep.avg >= opt_a


class TestSimulate:
    def test_heavier_coin_path(self):
        tree = build_ranking_tree(CCP4, "max-models")
        secret = _coin_code(CCP4, 4, heavier=True)
        history = simulate_play(CCP4, tree, secret)
        assert len(history) == 3
        ev = history[-1]
        from cobra.gamemodel import evaluate_experiment
        assert evaluate_experiment(CCP4, ev.instance, secret) == ev

    def test_lighter_coin_shorter_path(self):
        tree = build_ranking_tree(CCP4, "max-models")
        secret = _coin_code(CCP4, 1, heavier=False)
        assert len(simulate_play(CCP4, tree, secret)) == 2

    def test_lengths_aggregate_to_complexity(self):
        tree = build_ranking_tree(CCP4, "exp-models")
        space = CCP4.codespace()
        lengths = [len(simulate_play(CCP4, tree, c)) for c in space.codes]
        rep = eval_complexity(CCP4, tree)
        assert max(lengths) == rep.worst
        assert Fraction(sum(lengths), len(lengths)) == rep.avg

    def test_non_code_secret_rejected(self):
        tree = build_ranking_tree(CCP4, "max-models")
        bogus = Valuation(CCP4.variables, {v: False for v in CCP4.variables})
        with pytest.raises(Exception):
            simulate_play(CCP4, tree, bogus)


def _coin_code(game, coin, heavier):
    values = {v: False for v in game.variables}
    values[Variable(f"x{coin}")] = True
    values[Variable("y")] = heavier
    return Valuation(game.variables, values)


class TestKnowledge:
    def test_extend_tracks_masks(self):
        k = Knowledge.initial(CCP4)
        assert k.model_count == 8
        from cobra.gamemodel import evaluate_experiment
        ev = evaluate_experiment(CCP4, W1, _coin_code(CCP4, 3, True))
        k2 = k.extend(ev)
        assert k2.model_count == 4
        assert k2.fixed() == {Variable("x1"): False, Variable("x2"): False}

    def test_cache_key_is_symmetry_invariant(self):
        k1 = Knowledge(CCP4, canonicalize(and_([CCP4.phi0, not_(var_("x1"))])),
                       CCP4.codespace().mask_of(and_([CCP4.phi0, not_(var_("x1"))])))
        k2 = Knowledge(CCP4, canonicalize(and_([CCP4.phi0, not_(var_("x2"))])),
                       CCP4.codespace().mask_of(and_([CCP4.phi0, not_(var_("x2"))])))
        assert k1.cache_key() == k2.cache_key()


class TestExports:
    def test_json_schema(self):
        tree = build_ranking_tree(CCP4, "max-models")
        data = json.loads(tree_to_json(tree))
        assert data["strategy"] == "max-models"
        nodes = {n["node_id"]: n for n in data["nodes"]}
        root = nodes[0]
        assert root["kind"] == "experiment"
        assert root["experiment"] == "weigh1"
        assert root["params"] == ["coin1", "coin2"]
        leaf_ids = [n["node_id"] for n in data["nodes"] if n["kind"] == "leaf"]
        assert len(leaf_ids) == 8
        for n in data["nodes"]:
            if n["kind"] == "experiment":
                for cid in n["children"].values():
                    assert cid in nodes

    def test_dot_output(self):
        tree = build_ranking_tree(CCP4, "max-models")
        dot = tree_to_dot(tree)
        assert dot.startswith("digraph")
        assert "weigh1(coin1,coin2)" in dot
        assert "coin 4, heavier" in dot


def test_round_half_up():
    assert round_half_up(Fraction(713, 256)) == "2.78516"
    assert round_half_up(Fraction(235, 64)) == "3.67188"
    assert round_half_up(Fraction(9, 4)) == "2.25000"
    assert round_half_up(Fraction(1, 3), 3) == "0.333"


class TestOptimalMove:
    def test_initial_move_and_cost(self):
        choice, cost = synth.optimal_move(CCP4, "worst")
        assert cost == 3
        assert choice.experiment.name == "weigh1"

    def test_single_model_returns_code(self):
        k = Knowledge.initial(CCP4)
        phi = canonicalize(and_([CCP4.phi0, var_("x2"), var_("y")]))
        k = Knowledge(CCP4, phi, CCP4.codespace().mask_of(phi))
        choice, cost = synth.optimal_move(CCP4, "worst", k)
        assert cost == 0
        assert CCP4.describe_code(choice) == "coin 2, heavier"

    def test_unreachable_bound_reports_failure(self):
        choice, cost = synth.optimal_move(CCP4, "worst", upper=3)
        assert choice is None and cost == synth.INF
        choice, cost = synth.optimal_move(CCP4, "worst", upper=4)
        assert cost == 3
