"""Pool enumeration, assembly, verification, and the baseline transforms."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from combicat.logic import (
    STATEMENTS,
    Assignment,
    Pattern,
    PatternKind,
    Statement,
    classify,
    evaluate,
    truth_table,
)
from combicat.synthesis import (
    NOTA_TEXT,
    AtomicQuestion,
    CombinatorialQuestion,
    InfeasibleTierError,
    QuestionFormatError,
    TierConfig,
    apply_nota,
    assemble,
    atomize,
    generate_distractor_pool,
    generate_valid_pool,
    shuffle_options,
    synthesize_bank,
    synthesize_question,
    tier_config,
    verify,
)
from conftest import make_atomic_question

TIERS = ("Easy", "Medium", "Hard", "Expert")

# Hand-derived by enumerating the generation rules: valid formulas per tier,
# distractor formulas per tier. Independent of option count and answer index.
EXPECTED_POOL_SIZES = {
    "Easy": (1, 4),
    "Medium": (4, 7),
    "Hard": (7, 8),
    "Expert": (10, 9),
}


class TestAtomize:
    def test_answer_one_marks_only_first_variable(self):
        statements, truth = atomize(make_atomic_question(0, "I"))
        assert truth.values == (True, False, False, False)
        assert len(statements) == 4

    def test_answer_four_marks_only_last_variable(self):
        _, truth = atomize(make_atomic_question(0, "IV"))
        assert truth.values == (False, False, False, True)
        assert truth.answer() is Statement.IV

    def test_statements_restate_option_texts(self):
        question = make_atomic_question(3, "II")
        statements, _ = atomize(question)
        assert list(statements) == question.option_list()

    def test_five_options_rejected(self):
        question = AtomicQuestion(
            id="bad",
            context="c",
            options={"I": "a", "II": "b", "III": "c", "IV": "d", "V": "e"},
            answer="I",
        )
        with pytest.raises(QuestionFormatError, match="not four atomic options"):
            atomize(question)

    def test_answer_outside_options_rejected(self):
        question = AtomicQuestion(
            id="bad", context="c", options={"I": "a", "II": "b", "III": "c", "IV": "d"}, answer="V"
        )
        with pytest.raises(QuestionFormatError):
            atomize(question)


class TestPools:
    @pytest.mark.parametrize("tier", TIERS)
    @pytest.mark.parametrize("answer", STATEMENTS)
    def test_sizes_match_hand_enumeration(self, tier, answer):
        cfg = tier_config(tier)
        expected_valid, expected_distractor = EXPECTED_POOL_SIZES[tier]
        assert len(generate_valid_pool(cfg, answer)) == expected_valid
        assert len(generate_distractor_pool(cfg, answer)) == expected_distractor

    @pytest.mark.parametrize("tier", TIERS)
    @pytest.mark.parametrize("answer", STATEMENTS)
    def test_truth_labels_by_truth_table(self, tier, answer):
        """Every pool member's label checks out against full enumeration."""
        cfg = tier_config(tier)
        truth = Assignment.ground_truth(answer)
        for formula in generate_valid_pool(cfg, answer):
            rows = {a.values: v for a, v in truth_table(formula)}
            assert rows[truth.values] is True
        for formula in generate_distractor_pool(cfg, answer):
            rows = {a.values: v for a, v in truth_table(formula)}
            assert rows[truth.values] is False

    def test_easy_valid_pool_is_the_answer_exactness(self):
        pool = generate_valid_pool(tier_config("Easy"), Statement.I)
        assert pool == [Pattern(PatternKind.EXACTNESS, Statement.I).expand()]

    def test_distractor_pool_always_ends_with_universal_none(self):
        for tier in TIERS:
            pool = generate_distractor_pool(tier_config(tier), Statement.II)
            assert classify(pool[-1]) == "universal_none"


class TestAssemble:
    def test_deterministic_byte_identical(self):
        question = make_atomic_question(1, "II")
        cfg = tier_config("Expert")
        first = json.dumps(assemble(question, cfg, 99).to_record(), sort_keys=True)
        second = json.dumps(assemble(question, cfg, 99).to_record(), sort_keys=True)
        assert first == second

    def test_different_seeds_differ(self):
        question = make_atomic_question(1, "II")
        cfg = tier_config("Expert")
        records = {json.dumps(assemble(question, cfg, s).to_record(), sort_keys=True) for s in range(8)}
        assert len(records) > 1

    @pytest.mark.parametrize("answer", ["I", "II", "III", "IV"])
    def test_expert_presents_disjunction_and_negation(self, answer):
        question = make_atomic_question(2, answer)
        cfg = tier_config("Expert")
        for seed in range(25):
            combinatorial = assemble(question, cfg, seed)
            kinds = [
                found.kind if isinstance(found := classify(e.formula), Pattern) else None
                for e in combinatorial.options
            ]
            assert PatternKind.DISJUNCTION in kinds
            assert any(k in (PatternKind.NEGATION, PatternKind.COMPOUND_NEGATION) for k in kinds)

    def test_hard_presents_negation(self):
        question = make_atomic_question(2, "III")
        cfg = tier_config("Hard")
        for seed in range(25):
            combinatorial = assemble(question, cfg, seed)
            kinds = [classify(e.formula) for e in combinatorial.options]
            assert any(
                isinstance(k, Pattern)
                and k.kind in (PatternKind.NEGATION, PatternKind.COMPOUND_NEGATION)
                for k in kinds
            )

    def test_answer_set_bounds(self):
        for tier in TIERS:
            cfg = tier_config(tier)
            question = make_atomic_question(4, "I")
            combinatorial = assemble(question, cfg, 7)
            assert 1 <= len(combinatorial.answer_set) < len(combinatorial.options)

    def test_source_option_text_absent_from_options(self):
        question = make_atomic_question(5, "III")
        combinatorial = assemble(question, tier_config("Medium"), 3)
        correct_text = question.options["III"]
        assert all(correct_text != entry.text for entry in combinatorial.options)

    def test_easy_capped_at_five_options(self):
        combinatorial = assemble(make_atomic_question(6, "II"), tier_config("Easy", 6), 1)
        assert len(combinatorial.options) == 5

    def test_infeasible_config_raises(self):
        cfg = TierConfig(
            tier="Easy",
            allowed_patterns=frozenset({PatternKind.EXACTNESS}),
            required_patterns=frozenset(),
            n_correct_min=2,
            n_correct_max=2,
            n_options=5,
        )
        with pytest.raises(InfeasibleTierError):
            assemble(make_atomic_question(0, "I"), cfg, 0)

    def test_answer_count_range_must_sit_below_option_count(self):
        with pytest.raises(ValueError):
            TierConfig(
                tier="bad",
                allowed_patterns=frozenset({PatternKind.EXACTNESS}),
                required_patterns=frozenset(),
                n_correct_min=1,
                n_correct_max=6,
                n_options=6,
            )
        with pytest.raises(ValueError):
            tier_config("Medium", n_options=9)

    def test_record_round_trip(self):
        combinatorial = assemble(make_atomic_question(8, "IV"), tier_config("Hard"), 11)
        restored = CombinatorialQuestion.from_record(
            json.loads(json.dumps(combinatorial.to_record()))
        )
        assert restored == combinatorial

    def test_zh_question_renders_zh_options(self):
        question = AtomicQuestion(
            id="zh1",
            context="以下哪项陈述成立？",
            options={"I": "甲队获胜", "II": "乙队获胜", "III": "丙队获胜", "IV": "丁队获胜"},
            answer="II",
            language="zh",
        )
        combinatorial = assemble(question, tier_config("Expert"), 6)
        assert verify(combinatorial).valid
        for entry in combinatorial.options:
            assert "statement" not in entry.text
            assert "陈述" in entry.text


class TestVerify:
    def test_fresh_assembly_is_valid(self):
        combinatorial = assemble(make_atomic_question(9, "I"), tier_config("Expert"), 13)
        report = verify(combinatorial)
        assert report.valid
        assert report.violations == ()

    def test_mislabeled_option_flags_truth_mismatch(self):
        combinatorial = assemble(make_atomic_question(9, "I"), tier_config("Hard"), 13)
        wrong_letter = next(
            entry.letter
            for entry in combinatorial.options
            if entry.letter not in combinatorial.answer_set
        )
        tampered = CombinatorialQuestion(
            **{
                **combinatorial.__dict__,
                "answer_set": combinatorial.answer_set | {wrong_letter},
            }
        )
        report = verify(tampered)
        assert not report.valid
        assert any(v.rule == "truth-mismatch" for v in report.violations)

    def test_full_answer_set_flags_degenerate(self):
        combinatorial = assemble(make_atomic_question(9, "II"), tier_config("Medium"), 13)
        tampered = CombinatorialQuestion(
            **{
                **combinatorial.__dict__,
                "answer_set": frozenset(e.letter for e in combinatorial.options),
            }
        )
        report = verify(tampered)
        assert any(v.rule == "degenerate-answer-set" for v in report.violations)

    def test_duplicate_formula_detected(self):
        combinatorial = assemble(make_atomic_question(9, "III"), tier_config("Medium"), 13)
        options = list(combinatorial.options)
        clone = options[0].__class__(options[1].letter, options[0].formula, options[0].text)
        options[1] = clone
        tampered = CombinatorialQuestion(
            **{**combinatorial.__dict__, "options": tuple(options)}
        )
        report = verify(tampered)
        assert any(v.rule == "duplicate-formula" for v in report.violations)

    def test_missing_required_pattern_detected(self):
        combinatorial = assemble(make_atomic_question(9, "IV"), tier_config("Medium"), 13)
        relabeled = CombinatorialQuestion(
            **{**combinatorial.__dict__, "tier": "Expert"}
        )
        report = verify(relabeled)
        assert any(v.rule == "missing-required-pattern" for v in report.violations)


class TestSynthesizeLoop:
    def test_returns_zero_regenerations_in_normal_operation(self):
        combinatorial, retries = synthesize_question(
            make_atomic_question(10, "I"), tier_config("Expert"), 21
        )
        assert retries == 0
        assert verify(combinatorial).valid

    def test_bank_summary_counts(self):
        questions = [make_atomic_question(i) for i in range(8)]
        bank, summary = synthesize_bank(questions, seed=3, tier_for=lambda q: "Hard")
        assert summary.total == 8
        assert summary.tier_counts == {"Hard": 8}
        assert summary.regeneration_rate == 0.0
        assert len(bank) == 8

    def test_bank_is_seed_stable(self):
        questions = [make_atomic_question(i) for i in range(4)]
        first, _ = synthesize_bank(questions, seed=3, tier_for=lambda q: "Expert")
        second, _ = synthesize_bank(questions, seed=3, tier_for=lambda q: "Expert")
        assert [q.to_record() for q in first] == [q.to_record() for q in second]


@settings(max_examples=150, deadline=None)
@given(
    answer=st.sampled_from(["I", "II", "III", "IV"]),
    tier=st.sampled_from(TIERS),
    seed=st.integers(min_value=0, max_value=2**48),
)
def test_property_assembled_questions_always_verify(answer, tier, seed):
    """Validity by construction over random (answer, tier, seed) triples."""
    question = make_atomic_question(0, answer)
    cfg = tier_config(tier)
    combinatorial = assemble(question, cfg, seed)
    report = verify(combinatorial, cfg)
    assert report.valid, report.violations


@settings(max_examples=60, deadline=None)
@given(
    answer=st.sampled_from(["I", "II", "III", "IV"]),
    tier=st.sampled_from(TIERS),
    seed=st.integers(min_value=0, max_value=2**48),
)
def test_property_correct_options_true_under_truth(answer, tier, seed):
    question = make_atomic_question(0, answer)
    combinatorial = assemble(question, tier_config(tier), seed)
    truth = combinatorial.truth()
    for entry in combinatorial.options:
        expected = entry.letter in combinatorial.answer_set
        assert evaluate(entry.formula, truth) == expected


class TestNota:
    def test_correct_text_replaced_answer_kept(self):
        question = make_atomic_question(0, "II")
        transformed = apply_nota(question)
        assert transformed.options["II"] == NOTA_TEXT
        assert transformed.answer == "II"

    def test_idempotent(self):
        question = make_atomic_question(0, "II")
        once = apply_nota(question)
        twice = apply_nota(once)
        assert once == twice

    def test_original_correct_text_gone(self):
        question = make_atomic_question(0, "III")
        transformed = apply_nota(question)
        assert question.options["III"] not in transformed.options.values()

    def test_other_options_untouched(self):
        question = make_atomic_question(0, "I")
        transformed = apply_nota(question)
        for label in ("II", "III", "IV"):
            assert transformed.options[label] == question.options[label]


class TestShuffle:
    def test_answer_follows_correct_text(self):
        question = make_atomic_question(0, "II")
        for seed in range(40):
            shuffled = shuffle_options(question, seed)
            assert shuffled.options[shuffled.answer] == question.options["II"]

    def test_multiset_of_texts_preserved(self):
        question = make_atomic_question(0, "IV")
        shuffled = shuffle_options(question, 17)
        assert sorted(shuffled.options.values()) == sorted(question.options.values())

    def test_identity_permutation_exists(self):
        question = make_atomic_question(0, "I")
        assert any(shuffle_options(question, seed) == question for seed in range(64))

    def test_deterministic(self):
        question = make_atomic_question(0, "III")
        assert shuffle_options(question, 23) == shuffle_options(question, 23)

    @given(seed=st.integers(min_value=0, max_value=2**60))
    @settings(max_examples=80)
    def test_property_shuffle_is_a_permutation(self, seed):
        question = make_atomic_question(1, "II")
        shuffled = shuffle_options(question, seed)
        assert sorted(shuffled.options.values()) == sorted(question.options.values())
        assert shuffled.options[shuffled.answer] == question.options["II"]
