"""Metric extraction, z-normalization, the aggregate score, and tier cutoffs."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from combicat.scoring import (
    SCORED_METRICS,
    CognitiveMetrics,
    CorpusError,
    CorpusStats,
    ScoringConfig,
    ScoringConfigError,
    ThinkingTrace,
    extract_metrics,
    fallacy_penalty,
    gold_score,
    load_lexicons,
    normalize_against,
    shannon_entropy,
    stratify,
    z_normalize,
)


@pytest.fixture(scope="module")
def lexicons():
    return load_lexicons()


def trace(text: str, question_id: str = "t") -> ThinkingTrace:
    return ThinkingTrace.from_text(question_id, text)


def constant_metrics(value: float = 1.0, tokens: int = 100, segments: int = 2) -> CognitiveMetrics:
    return CognitiveMetrics(
        oscillation=value,
        logic_density=value,
        abductive_depth=value,
        dialectic_tension=value,
        dimensional_awareness=value,
        chain_steps=value,
        uncertainty_entropy=value,
        pivot_count=value,
        abstraction_level=value,
        token_count=tokens,
        segment_count=segments,
    )


class TestExtraction:
    def test_reversal_marker_count(self, lexicons):
        m = extract_metrics(trace("However the claim fails. However, wait."), lexicons)
        assert m.oscillation == 3

    def test_logic_density_per_hundred_tokens(self, lexicons):
        # 200 filler tokens, of which 4 are connectives
        words = ["noun"] * 196 + ["and", "or", "therefore", "because"]
        m = extract_metrics(trace(" ".join(words)), lexicons)
        assert m.token_count == 200
        assert m.logic_density == pytest.approx(2.0)

    def test_empty_trace_all_zero(self, lexicons):
        m = extract_metrics(trace(""), lexicons)
        assert m.oscillation == 0
        assert m.logic_density == 0.0
        assert m.uncertainty_entropy == 0.0
        assert m.token_count == 0
        assert m.segment_count == 0

    def test_abductive_pairs_in_order(self, lexicons):
        text = "Suppose A holds. We can rule out B. Suppose C. That is impossible."
        m = extract_metrics(trace(text), lexicons)
        assert m.abductive_depth == 2

    def test_elimination_before_hypothesis_does_not_pair(self, lexicons):
        m = extract_metrics(trace("Rule out B. Done."), lexicons)
        assert m.abductive_depth == 0

    def test_dialectic_triples(self, lexicons):
        text = "On one hand X. On the other hand Y. On balance, Z."
        m = extract_metrics(trace(text), lexicons)
        assert m.dialectic_tension == 1

    def test_chain_steps_count_numbered_lines(self, lexicons):
        text = "1. observe\n2. deduce\n3. conclude"
        m = extract_metrics(trace(text), lexicons)
        assert m.chain_steps >= 3

    def test_segments_split_on_blank_lines(self, lexicons):
        m = extract_metrics(trace("one block\n\nsecond block\n\n\nthird"), lexicons)
        assert m.segment_count == 3

    def test_trailing_whitespace_invariance(self, lexicons):
        base = "However the answer is clear.\n\nSuppose not; rule out the rest."
        a = extract_metrics(trace(base), lexicons)
        b = extract_metrics(trace(base + "   \n\n  \n"), lexicons)
        for name in SCORED_METRICS:
            if name == "logic_density":
                continue  # density is per token and the token count is unchanged
            assert getattr(a, name) == getattr(b, name)
        assert a.segment_count == b.segment_count

    def test_deterministic(self, lexicons):
        text = "However, maybe A. Clearly B. Perhaps C."
        assert extract_metrics(trace(text), lexicons) == extract_metrics(trace(text), lexicons)

    def test_abstraction_level_takes_highest_class(self, lexicons):
        m = extract_metrics(trace("Specifically, this case. As a principle, all cases."), lexicons)
        assert m.abstraction_level == 3

    def test_zh_markers_counted(self, lexicons):
        m = extract_metrics(trace("但是这个结论不对。因此排除选项B。"), lexicons)
        assert m.oscillation >= 1
        assert m.logic_density > 0


class TestEntropy:
    def test_single_class_zero(self, lexicons):
        m = extract_metrics(trace("clearly clearly clearly certain? clearly"), lexicons)
        assert m.uncertainty_entropy == 0.0

    def test_uniform_two_classes(self, lexicons):
        m = extract_metrics(trace("clearly yes. maybe no."), lexicons)
        assert m.uncertainty_entropy == pytest.approx(math.log(2))

    def test_uniform_four_classes_hits_maximum(self, lexicons):
        text = "clearly one. probably two. maybe three. unlikely four."
        m = extract_metrics(trace(text), lexicons)
        assert m.uncertainty_entropy == pytest.approx(math.log(4))

    def test_bounded_by_class_count(self, lexicons):
        text = "clearly, probably, maybe, unlikely, definitely, likely, perhaps, doubtful."
        m = extract_metrics(trace(text), lexicons)
        assert 0.0 <= m.uncertainty_entropy <= math.log(lexicons.epistemic_class_count) + 1e-12

    def test_helper_on_raw_counts(self):
        assert shannon_entropy([5, 0, 0]) == 0.0
        assert shannon_entropy([2, 2, 2]) == pytest.approx(math.log(3))
        assert shannon_entropy([]) == 0.0


class TestNormalization:
    def test_two_trace_corpus_gives_plus_minus_one(self):
        a = constant_metrics(1.0)
        b = constant_metrics(3.0)
        z_rows, stats = z_normalize([a, b])
        for name in SCORED_METRICS:
            assert z_rows[0][name] == pytest.approx(-1.0)
            assert z_rows[1][name] == pytest.approx(1.0)
        assert stats.means["logic_density"] == pytest.approx(2.0)

    def test_constant_metric_floors_to_zero(self):
        rows, _ = z_normalize([constant_metrics(2.0), constant_metrics(2.0)])
        for row in rows:
            assert all(value == 0.0 for value in row.values())

    def test_normalized_means_are_zero(self):
        corpus = [constant_metrics(float(v)) for v in (1, 2, 5, 9)]
        rows, _ = z_normalize(corpus)
        for name in SCORED_METRICS:
            mean = sum(row[name] for row in rows) / len(rows)
            assert abs(mean) < 1e-9

    def test_single_trace_rejected(self):
        with pytest.raises(CorpusError, match="insufficient corpus"):
            z_normalize([constant_metrics(1.0)])

    def test_frozen_stats_round_trip(self):
        _, stats = z_normalize([constant_metrics(1.0), constant_metrics(3.0)])
        restored = CorpusStats.from_dict(stats.to_dict())
        z = normalize_against(restored, constant_metrics(3.0))
        assert z["oscillation"] == pytest.approx(1.0)


class TestGoldScore:
    def test_all_zero_z_lands_on_offset(self):
        z = {name: 0.0 for name in SCORED_METRICS}
        score = gold_score(z)
        assert score.value == pytest.approx(23.2)
        assert score.tier == "Medium"

    def test_uniform_ones_shift_by_nine(self):
        z = {name: 1.0 for name in SCORED_METRICS}
        score = gold_score(z)
        assert score.value == pytest.approx(32.2)
        assert score.tier == "Expert"

    def test_penalty_subtracts_linearly(self):
        z = {name: 0.5 for name in SCORED_METRICS}
        clean = gold_score(z, ScoringConfig(penalty_rate=2.0), fallacy_score=0.0)
        hit = gold_score(z, ScoringConfig(penalty_rate=2.0), fallacy_score=5.0)
        assert clean.value - hit.value == pytest.approx(10.0)
        assert hit.penalty == pytest.approx(10.0)

    def test_linearity_around_offset(self):
        za = {name: 0.3 * i for i, name in enumerate(SCORED_METRICS)}
        zb = {name: -0.1 * i for i, name in enumerate(SCORED_METRICS)}
        zsum = {name: za[name] + zb[name] for name in SCORED_METRICS}
        offset = ScoringConfig().offset
        lhs = gold_score(zsum).value - offset
        rhs = (gold_score(za).value - offset) + (gold_score(zb).value - offset)
        assert lhs == pytest.approx(rhs)

    def test_missing_weight_rejected(self):
        with pytest.raises(ScoringConfigError):
            ScoringConfig(weights={"oscillation": 1.0})

    def test_missing_z_entry_rejected(self):
        with pytest.raises(ScoringConfigError):
            gold_score({"oscillation": 1.0})

    def test_components_recorded(self):
        z = {name: 0.25 for name in SCORED_METRICS}
        assert gold_score(z).components == z


class TestStratify:
    def test_boundaries(self):
        assert stratify(19.99) == "Easy"
        assert stratify(20.0) == "Medium"
        assert stratify(25.0) == "Hard"
        assert stratify(30.0) == "Expert"

    def test_partitions_the_line(self):
        for value in (-100.0, 0.0, 19.999999, 20.0, 24.999999, 25.0, 29.999999, 30.0, 1e9):
            assert stratify(value) in ("Easy", "Medium", "Hard", "Expert")

    @given(st.floats(min_value=-50, max_value=80, allow_nan=False))
    @settings(max_examples=200)
    def test_monotone_non_decreasing(self, value):
        order = {"Easy": 0, "Medium": 1, "Hard": 2, "Expert": 3}
        assert order[stratify(value)] <= order[stratify(value + 0.5)]


class TestFallacyPenalty:
    def test_assertion_then_different_final_line(self, lexicons):
        t = trace("The premise is sound, the answer is B.\nC")
        assert fallacy_penalty(t, lexicons) >= 1.0

    def test_consistent_trace_scores_zero(self, lexicons):
        t = trace("The answer is B because the premise holds.\nB")
        assert fallacy_penalty(t, lexicons) == 0.0

    def test_two_mismatched_assertions_count_twice(self, lexicons):
        t = trace("First the answer is B.\nLater the answer is D.\nC")
        assert fallacy_penalty(t, lexicons) == 2.0

    def test_explicit_contradiction_marker_counts(self, lexicons):
        t = trace("This is where I contradict myself badly.\nA")
        assert fallacy_penalty(t, lexicons) >= 1.0

    def test_pluggable_checker_overrides(self, lexicons):
        t = trace("anything")
        assert fallacy_penalty(t, lexicons, checker=lambda _: 7.5) == 7.5

    def test_no_final_answer_no_mismatch(self, lexicons):
        t = trace("the answer is B and that is all I will say about it")
        # the final line contains prose, still parses the letter B, consistent
        assert fallacy_penalty(t, lexicons) == 0.0
