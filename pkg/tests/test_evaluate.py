import pytest

from defect_triage.evaluate import entails, evaluate
from defect_triage.facts import DEFECTIVE, OK, SymbolicExample, parse_facts
from defect_triage.learner import FactStore, parse_clause, parse_theory
from defect_triage.synth import SynthConfig, generate_dataset

from oracles import max_true_atoms_exhaustive, theory_entailed_exhaustive

LISTING_FACTS = """\
total_volume(cast_6858,tvol_large).
num_hps(cast_6858,cnt_1).
has_hp(cast_6858,hp_6858_2).
has_size(hp_6858_2,vol_large).
distance_from_center(hp_6858_2,outer_rim).
eccentricity(hp_6858_2,very_elongated).
"""

MIXED_THEORY = parse_theory(
    "defective(A) :- has_hp(A,B), has_size(B,vol_large), distance_from_center(B,outer_rim).\n"
    "defective(A) :- total_volume(A,B), num_leq(tvol_large,B).\n"
    "defective(A) :- num_hps(A,B), num_leq(cnt_many,B).\n"
)


@pytest.fixture(scope="module")
def listing_example():
    return SymbolicExample("6858", tuple(parse_facts(LISTING_FACTS)))


class TestEvaluate:
    def test_satisfied_listing(self, listing_example, background):
        theory = parse_theory("defective(A) :- has_hp(A,B), has_size(B,vol_large).\n")
        result = evaluate(theory, listing_example, background)
        assert result.label == DEFECTIVE
        assert len(result.justifications) == 1
        j = result.justifications[0]
        assert j.satisfied
        assert j.binding == {"A": "cast_6858", "B": "hp_6858_2"}
        assert all(e.truth for e in j.atom_evals)
        assert all(e.bound_atom.is_ground for e in j.atom_evals)

    def test_empty_theory(self, listing_example, background):
        result = evaluate(parse_theory(""), listing_example, background)
        assert result.label == OK
        assert result.justifications == ()

    def test_nearest_miss_max_true(self, listing_example, background):
        clause = parse_clause(
            "defective(A) :- has_hp(A,B), distance_from_center(B,inner_rim)."
        )
        theory = parse_theory("")
        result = evaluate(
            parse_theory(
                "defective(A) :- has_hp(A,B), distance_from_center(B,inner_rim).\n"
            ),
            listing_example,
            background,
        )
        assert result.label == OK
        j = result.justifications[0]
        assert not j.satisfied
        truths = [e.truth for e in j.atom_evals]
        assert truths == [True, False]
        assert j.binding["B"] == "hp_6858_2"
        # exhaustively exactly one true atom is the best any binding can do
        assert max_true_atoms_exhaustive(clause, listing_example, background) == 1

    def test_satisfied_atoms_all_present(self, listing_example, background):
        result = evaluate(MIXED_THEORY, listing_example, background)
        store = FactStore.for_example(listing_example, background)
        for j in result.justifications:
            if j.satisfied:
                for e in j.atom_evals:
                    assert e.bound_atom in store.atom_set

    def test_deterministic(self, listing_example, background):
        a = evaluate(MIXED_THEORY, listing_example, background)
        b = evaluate(MIXED_THEORY, listing_example, background)
        assert a == b

    def test_all_bindings_flag(self, background):
        facts = parse_facts(
            "total_volume(cast_1,tvol_small).\n"
            "num_hps(cast_1,cnt_2).\n"
            "has_hp(cast_1,hp_1_1).\n"
            "has_hp(cast_1,hp_1_2).\n"
            "has_size(hp_1_1,vol_small).\n"
            "has_size(hp_1_2,vol_small).\n"
        )
        example = SymbolicExample("1", tuple(facts))
        theory = parse_theory("defective(A) :- has_hp(A,B), has_size(B,vol_small).\n")
        single = evaluate(theory, example, background)
        assert len(single.justifications) == 1
        multi = evaluate(theory, example, background, all_bindings=True)
        assert len(multi.justifications) == 2
        assert [j.binding["B"] for j in multi.justifications] == ["hp_1_1", "hp_1_2"]

    def test_unknown_predicate_is_false_not_error(self, listing_example, background):
        theory = parse_theory("defective(A) :- has_crack(A,B).\n")
        result = evaluate(theory, listing_example, background)
        assert result.label == OK
        assert not result.justifications[0].satisfied


class TestEntailsAgreement:
    def test_entails_matches_evaluate(self, listing_example, background):
        for theory_text in (
            "",
            "defective(A) :- has_hp(A,B), has_size(B,vol_large).\n",
            "defective(A) :- has_hp(A,B), distance_from_center(B,inner_rim).\n",
        ):
            theory = parse_theory(theory_text)
            assert entails(theory, listing_example, background) == (
                evaluate(theory, listing_example, background).label == DEFECTIVE
            )

    def test_agreement_on_random_examples(self, ground_truth_theory, background):
        config = SynthConfig(
            seed=99,
            count=1000,
            ground_truth_theory=ground_truth_theory,
            image_size=(48, 48),
            blob_radius_range=(1.5, 6.0),
            defect_count_range=(0, 2),
        )
        data = generate_dataset(config)
        for _, example in data:
            fast = entails(MIXED_THEORY, example, background)
            traced = evaluate(MIXED_THEORY, example, background)
            assert fast == (traced.label == DEFECTIVE)

    def test_agreement_with_exhaustive_oracle_sample(self, ground_truth_theory, background):
        config = SynthConfig(
            seed=5,
            count=60,
            ground_truth_theory=ground_truth_theory,
            image_size=(48, 48),
            blob_radius_range=(1.5, 6.0),
            defect_count_range=(0, 2),
        )
        data = generate_dataset(config)
        checked = 0
        for _, example in data:
            constants = {a for f in example.facts for a in f.args}
            if len(constants) > 12:
                continue
            checked += 1
            assert entails(MIXED_THEORY, example, background) == theory_entailed_exhaustive(
                MIXED_THEORY, example, background
            )
        assert checked >= 20
