import itertools

import pytest

from cobra.formula import (Variable, and_, canonicalize, conj, evaluate,
                           exactly, not_, or_, param_, var_)
from cobra.gamemodel import (ALL_TUPLES, DISTINCT_TUPLES, Attribute,
                             DeductiveGame, GameDefinitionError,
                             IllFormedGameError, InstanceSet,
                             ParameterizedExperiment, Valuation,
                             check_well_formed, evaluate_experiment,
                             instantiate_outcome, is_faithful, outcomes)
from cobra.gamedsl import gen_ccp, gen_mastermind
from cobra import symmetry
from bruteforce import all_valuations

CCP4 = gen_ccp(4)
MM = gen_mastermind(4, 6)


def coin_code(game, coin, heavier):
    values = {v: False for v in game.variables}
    values[Variable(f"x{coin}")] = True
    values[Variable("y")] = heavier
    return Valuation(game.variables, values)


def mm_code(game, letters):
    want = letters
    for c in game.codespace().codes:
        if game.describe_code(c) == want:
            return c
    raise AssertionError(f"no code {letters}")


class TestInstantiation:
    def test_lighter_template_on_last_two_coins(self):
        t = CCP4.experiments[0]
        got = instantiate_outcome(CCP4, t, t.templates[0], ("coin4", "coin3"))
        want = canonicalize(or_([and_([var_("x4"), not_(var_("y"))]),
                                 and_([var_("x3"), var_("y")])]))
        assert got is want

    def test_balanced_template(self):
        t = CCP4.experiments[0]
        got = instantiate_outcome(CCP4, t, t.templates[1], ("coin1", "coin2"))
        assert got is canonicalize(and_([not_(var_("x1")), not_(var_("x2"))]))

    def test_template_without_atoms_unchanged(self):
        game = _tiny_game()
        t = game.experiments[0]
        got = instantiate_outcome(game, t, canonicalize(var_("z")), ("p1",))
        assert got is var_("z")

    def test_outcomes_count(self):
        assert len(outcomes(CCP4.instance("weigh1", ("coin1", "coin2")))) == 3
        assert len(outcomes(CCP4.instance("weigh2",
                                          ("coin1", "coin2", "coin3", "coin4")))) == 3
        assert len(outcomes(_tiny_game().instance("probe", ("p1",)))) == 2


def _tiny_game():
    z = Variable("z")
    w = Variable("w")
    attr = Attribute("f", {"p1": w, "p2": z})
    probe = ParameterizedExperiment(
        "probe", InstanceSet(1, ALL_TUPLES),
        [("hit", var_("z")), ("miss", not_(var_("z")))])
    return DeductiveGame("tiny", [w, z], or_([var_("w"), var_("z")]),
                         ["p1", "p2"], [attr], [probe])


class TestWellFormed:
    def test_generated_game_is_well_formed(self):
        reps = symmetry.experiments_for(CCP4, CCP4.phi0)
        assert check_well_formed(CCP4, reps).ok

    def test_missing_outcome_detected(self):
        t1 = CCP4.experiments[0]
        broken = ParameterizedExperiment(
            "broken", InstanceSet(2, DISTINCT_TUPLES),
            list(zip(t1.outcome_labels[:2], t1.templates[:2])))  # no ">" reply
        game = DeductiveGame("broken-ccp", list(CCP4.variables), CCP4.phi0,
                             list(CCP4.params), list(CCP4.attributes), [broken])
        report = check_well_formed(game, [game.instance("broken", ("coin1", "coin2"))])
        assert not report.ok
        v = report.witness_valuation
        hits = [f for f in report.witness_instance.outcome_formulas()
                if evaluate(f, v)]
        assert len(hits) != 1

    def test_duplicated_outcome_detected(self):
        t1 = CCP4.experiments[0]
        doubled = ParameterizedExperiment(
            "doubled", InstanceSet(2, DISTINCT_TUPLES),
            list(zip(t1.outcome_labels, t1.templates))
            + [("=2", t1.templates[1])])
        game = DeductiveGame("dup-ccp", list(CCP4.variables), CCP4.phi0,
                             list(CCP4.params), list(CCP4.attributes), [doubled])
        report = check_well_formed(game, [game.instance("doubled", ("coin1", "coin2"))])
        assert not report.ok


class TestEvaluateExperiment:
    def test_marker_reply(self):
        ev = evaluate_experiment(MM, MM.instance("guess", tuple("CCAC")),
                                 mm_code(MM, "BACC"))
        assert ev.outcome_label == "1b2w"

    def test_balanced_when_suspects_off_scale(self):
        ev = evaluate_experiment(CCP4, CCP4.instance("weigh1", ("coin1", "coin2")),
                                 coin_code(CCP4, 3, heavier=True))
        assert ev.outcome_label == "="

    def test_left_pan_lighter(self):
        ev = evaluate_experiment(CCP4, CCP4.instance("weigh1", ("coin1", "coin2")),
                                 coin_code(CCP4, 1, heavier=False))
        assert ev.outcome_label == "<"

    def test_ill_formed_game_raises(self):
        t1 = CCP4.experiments[0]
        broken = ParameterizedExperiment(
            "broken", InstanceSet(2, DISTINCT_TUPLES),
            list(zip(t1.outcome_labels[:2], t1.templates[:2])))
        game = DeductiveGame("broken-ccp", list(CCP4.variables), CCP4.phi0,
                             list(CCP4.params), list(CCP4.attributes), [broken])
        with pytest.raises(IllFormedGameError):
            evaluate_experiment(game, game.instance("broken", ("coin1", "coin2")),
                                coin_code(game, 1, heavier=True))


class TestFaithfulness:
    def test_weighings_are_faithful(self):
        assert all(is_faithful(t) for t in CCP4.experiments)

    def test_guess_is_faithful(self):
        assert is_faithful(MM.experiments[0])

    def test_variant_experiments_are_faithful(self):
        for variant in ("col", "pos"):
            g = gen_mastermind(2, 3, variant)
            assert all(is_faithful(t) for t in g.experiments)

    def test_direct_image_variable_breaks_faithfulness(self):
        xs = [Variable(f"x{i}") for i in range(1, 4)]
        d = Attribute("d", {f"c{i}": xs[i - 1] for i in range(1, 4)})
        with pytest.warns(UserWarning):
            bad = ParameterizedExperiment(
                "bad", InstanceSet(1, DISTINCT_TUPLES),
                [("a", and_([param_("d", 1), var_("x1")])),
                 ("b", not_(and_([param_("d", 1), var_("x1")])))])
            game = DeductiveGame("bad", xs, exactly(1, [var_(x) for x in xs]),
                                 [f"c{i}" for i in range(1, 4)], [d], [bad])
        assert not is_faithful(game.experiments[0])


class TestStructuralProperties:
    @pytest.mark.parametrize("game", [gen_ccp(3), CCP4,
                                      gen_mastermind(2, 2), gen_mastermind(2, 3)])
    def test_exactly_one_outcome_per_code(self, game):
        for inst in game.all_instances():
            for code in game.codespace().codes:
                hits = sum(evaluate(f, code) for f in inst.outcome_formulas())
                assert hits == 1, (inst.label, game.describe_code(code))

    def test_instantiation_commutes_with_parameter_swap(self):
        # substituting a swapped tuple equals permuting the substituted
        # formula by the induced variable transposition
        for game in (CCP4, gen_mastermind(2, 3)):
            from cobra.formula import apply_permutation
            for t in game.experiments:
                if t.arity < 2:
                    continue
                params = game.params[:t.arity]
                a, b = params[0], params[1]
                lift = game.transposition_lift(a, b)
                swapped = tuple(b if p == a else a if p == b else p
                                for p in params)
                if not t.instances.contains(tuple(params)):
                    continue
                for tpl in t.templates:
                    direct = instantiate_outcome(game, t, tpl, swapped)
                    moved = canonicalize(apply_permutation(
                        instantiate_outcome(game, t, tpl, tuple(params)), lift))
                    assert direct is moved

    def test_position_symmetry_matches_brute_force(self):
        # interchangeable template positions, verified against trying the
        # transposition on every admissible tuple
        for game in (CCP4, gen_mastermind(2, 3), gen_mastermind(2, 3, "pos")):
            for t in game.experiments:
                k = t.arity
                for i in range(k):
                    for j in range(i + 1, k):
                        same_group = t.position_groups[i] == t.position_groups[j]
                        brute = _positions_swap_invariant(game, t, i, j)
                        assert same_group == brute, (t.name, i, j)


def _positions_swap_invariant(game, t, i, j):
    for p in t.instances.iter_tuples(game.params):
        q = list(p)
        q[i], q[j] = q[j], q[i]
        q = tuple(q)
        left = sorted((instantiate_outcome(game, t, tpl, p) for tpl in t.templates),
                      key=id)
        right = sorted((instantiate_outcome(game, t, tpl, q) for tpl in t.templates),
                       key=id)
        if left != right:
            return False
    return True


class TestValidation:
    def test_overlapping_attribute_images_rejected(self):
        x = Variable("x")
        a1 = Attribute("f", {"p": x})
        a2 = Attribute("g", {"p": x})
        probe = ParameterizedExperiment(
            "p", InstanceSet(1, ALL_TUPLES), [("t", param_("f", 1))])
        with pytest.raises(GameDefinitionError):
            DeductiveGame("bad", [x], var_("x"), ["p"], [a1, a2], [probe])

    def test_arity_overflow_rejected(self):
        x = Variable("x")
        a = Attribute("f", {"p": x})
        probe = ParameterizedExperiment(
            "p", InstanceSet(1, ALL_TUPLES), [("t", param_("f", 2))])
        with pytest.raises(GameDefinitionError):
            DeductiveGame("bad", [x], var_("x"), ["p"], [a], [probe])

    def test_unsatisfiable_constraint_rejected(self):
        x = Variable("x")
        a = Attribute("f", {"p": x})
        probe = ParameterizedExperiment(
            "p", InstanceSet(1, ALL_TUPLES), [("t", param_("f", 1))])
        with pytest.raises(GameDefinitionError):
            DeductiveGame("bad", [x], and_([var_("x"), not_(var_("x"))]),
                          ["p"], [a], [probe])
