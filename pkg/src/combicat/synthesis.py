"""Transforms single-answer questions into multi-select combinatorial questions.

The pipeline per question: restate the four options as statements, derive the
truth valuation with exactly the answered statement true, enumerate the pools
of always-true and always-false option formulas allowed by the difficulty
tier, sample and shuffle a fixed number of options, and verify the result
against the truth-table semantics. Every step is a pure function of
(question, tier config, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from itertools import combinations
from typing import Any, Callable, Iterable, Mapping

from .logic import (
    STATEMENTS,
    Assignment,
    Formula,
    Pattern,
    PatternKind,
    Statement,
    canonical_key,
    classify,
    evaluate,
    parse_formula,
    render,
    serialize,
    statement_from_label,
    universal_none,
)
from .rng import PortableRng, derive_seed

OPTION_LETTERS = "ABCDEFGH"

TIER_NAMES = ("Easy", "Medium", "Hard", "Expert")


class QuestionFormatError(ValueError):
    """A source question violates the four-option single-answer contract."""


class InfeasibleTierError(RuntimeError):
    """The tier configuration cannot be satisfied by the available pools."""


@dataclass(frozen=True)
class AtomicQuestion:
    """A four-option single-answer source question."""

    id: str
    context: str
    options: Mapping[str, str]
    answer: str
    language: str = "en"
    source: str = ""
    reasoning_type: str = ""
    extras: Mapping[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        labels = tuple(self.options.keys())
        if sorted(labels) != sorted(s.name for s in STATEMENTS):
            raise QuestionFormatError(
                f"question {self.id!r}: not four atomic options keyed I..IV (got {labels})"
            )
        if self.answer not in self.options:
            raise QuestionFormatError(
                f"question {self.id!r}: answer {self.answer!r} not among option keys"
            )
        if self.language not in ("en", "zh"):
            raise QuestionFormatError(f"question {self.id!r}: unsupported language {self.language!r}")

    def answer_index(self) -> Statement:
        return statement_from_label(self.answer)

    def option_list(self) -> list[str]:
        """Option texts in statement order I..IV."""
        return [self.options[s.name] for s in STATEMENTS]

    def to_record(self) -> dict[str, Any]:
        record: dict[str, Any] = {
            "id": self.id,
            "context": self.context,
            "options": {s.name: self.options[s.name] for s in STATEMENTS},
            "answer": self.answer,
            "language": self.language,
            "source": self.source,
            "reasoning_type": self.reasoning_type,
        }
        record.update(self.extras)
        return record

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "AtomicQuestion":
        known = {"id", "context", "options", "answer", "language", "source", "reasoning_type"}
        question = cls(
            id=str(record["id"]),
            context=str(record.get("context", "")),
            options=dict(record["options"]),
            answer=str(record["answer"]),
            language=str(record.get("language", "en")),
            source=str(record.get("source", "")),
            reasoning_type=str(record.get("reasoning_type", "")),
            extras={k: v for k, v in record.items() if k not in known},
        )
        question.validate()
        return question


@dataclass(frozen=True)
class TierConfig:
    """Operator families, answer-count range, and sampling weights for one tier."""

    tier: str
    allowed_patterns: frozenset[PatternKind]
    required_patterns: frozenset[PatternKind]
    n_correct_min: int
    n_correct_max: int
    n_options: int = 6
    weights: Mapping[PatternKind, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 1 <= self.n_correct_min <= self.n_correct_max < self.n_options:
            raise ValueError(
                f"tier {self.tier!r}: answer-count range "
                f"[{self.n_correct_min}, {self.n_correct_max}] must sit inside [1, {self.n_options})"
            )
        if not self.required_patterns <= self.allowed_patterns:
            raise ValueError(f"tier {self.tier!r}: required patterns must be allowed")

    def weight_for(self, kind: PatternKind) -> float:
        return float(self.weights.get(kind, 1.0))


def tier_config(tier: str, n_options: int = 6) -> TierConfig:
    """Built-in tier ladder: each tier widens the allowed operator family.

    The Easy pools hold five formulas in total (one always-true exactness plus
    four distractors), so Easy questions carry at most five options no matter
    what is configured; the other tiers honor the requested count.
    """
    if not 5 <= n_options <= 8:
        raise ValueError(f"option count {n_options} outside the supported range 5..8")
    kinds = PatternKind
    table = {
        "Easy": TierConfig("Easy", frozenset({kinds.EXACTNESS}), frozenset(), 1, 1, min(n_options, 5)),
        "Medium": TierConfig(
            "Medium", frozenset({kinds.EXACTNESS, kinds.DISJUNCTION}), frozenset(), 1, 2, n_options
        ),
        "Hard": TierConfig(
            "Hard",
            frozenset({kinds.EXACTNESS, kinds.DISJUNCTION, kinds.NEGATION}),
            frozenset({kinds.NEGATION}),
            1,
            3,
            n_options,
        ),
        "Expert": TierConfig(
            "Expert",
            frozenset(kinds),
            frozenset({kinds.DISJUNCTION, kinds.NEGATION}),
            2,
            4,
            n_options,
        ),
    }
    if tier not in table:
        raise ValueError(f"unknown tier {tier!r}")
    return table[tier]


@dataclass(frozen=True)
class OptionEntry:
    letter: str
    formula: Formula
    text: str


@dataclass(frozen=True)
class CombinatorialQuestion:
    """Multi-select question whose options are formulas over the statements."""

    id: str
    source_id: str
    context: str
    statements: tuple[str, str, str, str]
    options: tuple[OptionEntry, ...]
    answer_set: frozenset[str]
    tier: str
    seed: int
    source_answer: str
    language: str = "en"
    source: str = ""
    reasoning_type: str = ""
    extras: Mapping[str, Any] = field(default_factory=dict)

    def truth(self) -> Assignment:
        return Assignment.ground_truth(statement_from_label(self.source_answer))

    def letters(self) -> tuple[str, ...]:
        return tuple(entry.letter for entry in self.options)

    def to_record(self) -> dict[str, Any]:
        record: dict[str, Any] = {
            "id": self.id,
            "source_id": self.source_id,
            "context": self.context,
            "statements": list(self.statements),
            "options": [
                {"letter": entry.letter, "formula": serialize(entry.formula), "text": entry.text}
                for entry in self.options
            ],
            "answer_set": sorted(self.answer_set),
            "tier": self.tier,
            "seed": self.seed,
            "source_answer": self.source_answer,
            "language": self.language,
            "source": self.source,
            "reasoning_type": self.reasoning_type,
        }
        record.update(self.extras)
        return record

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "CombinatorialQuestion":
        known = {
            "id",
            "source_id",
            "context",
            "statements",
            "options",
            "answer_set",
            "tier",
            "seed",
            "source_answer",
            "language",
            "source",
            "reasoning_type",
        }
        options = tuple(
            OptionEntry(item["letter"], parse_formula(item["formula"]), item["text"])
            for item in record["options"]
        )
        return cls(
            id=str(record["id"]),
            source_id=str(record["source_id"]),
            context=str(record.get("context", "")),
            statements=tuple(record["statements"]),
            options=options,
            answer_set=frozenset(record["answer_set"]),
            tier=str(record["tier"]),
            seed=int(record["seed"]),
            source_answer=str(record["source_answer"]),
            language=str(record.get("language", "en")),
            source=str(record.get("source", "")),
            reasoning_type=str(record.get("reasoning_type", "")),
            extras={k: v for k, v in record.items() if k not in known},
        )


@dataclass(frozen=True)
class Violation:
    letter: str
    rule: str
    message: str


@dataclass(frozen=True)
class VerificationReport:
    valid: bool
    violations: tuple[Violation, ...]

    @classmethod
    def from_violations(cls, violations: Iterable[Violation]) -> "VerificationReport":
        items = tuple(violations)
        return cls(valid=not items, violations=items)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def atomize(question: AtomicQuestion) -> tuple[tuple[str, str, str, str], Assignment]:
    """Statements for the four options plus the induced truth valuation.

    Option texts already read as declarative claims, so the restatement is the
    identity; the valuation marks exactly the answered statement true.
    """
    question.validate()
    statements = tuple(question.option_list())
    return statements, Assignment.ground_truth(question.answer_index())


@lru_cache(maxsize=None)
def _pools_for(allowed: frozenset[PatternKind], answer: Statement) -> tuple[tuple[Formula, ...], tuple[Formula, ...]]:
    """Enumerate (valid, distractor) formula pools in a fixed, documented order.

    Valid pool: exactness of the answer; disjunctions pairing the answer with
    each other statement; negations of each other statement; compound
    negations over pairs excluding the answer.

    Distractor pool: exactness of each other statement; disjunctions over
    pairs excluding the answer; negation of the answer; one canonical false
    compound negation (the answer paired with the smallest other statement);
    and always the universal distractor, listed last.
    """
    others = [s for s in STATEMENTS if s != answer]
    valid: list[Formula] = [Pattern(PatternKind.EXACTNESS, answer).expand()]
    if PatternKind.DISJUNCTION in allowed:
        valid += [Pattern(PatternKind.DISJUNCTION, answer, j).expand() for j in others]
    if PatternKind.NEGATION in allowed:
        valid += [Pattern(PatternKind.NEGATION, j).expand() for j in others]
    if PatternKind.COMPOUND_NEGATION in allowed:
        valid += [Pattern(PatternKind.COMPOUND_NEGATION, j, k).expand() for j, k in combinations(others, 2)]

    distractor: list[Formula] = [Pattern(PatternKind.EXACTNESS, j).expand() for j in others]
    if PatternKind.DISJUNCTION in allowed:
        distractor += [Pattern(PatternKind.DISJUNCTION, j, k).expand() for j, k in combinations(others, 2)]
    if PatternKind.NEGATION in allowed:
        distractor.append(Pattern(PatternKind.NEGATION, answer).expand())
    if PatternKind.COMPOUND_NEGATION in allowed:
        distractor.append(Pattern(PatternKind.COMPOUND_NEGATION, answer, others[0]).expand())
    distractor.append(universal_none())
    return tuple(valid), tuple(distractor)


def generate_valid_pool(cfg: TierConfig, answer: Statement) -> list[Formula]:
    """Formulas that evaluate true under the ground-truth valuation."""
    return list(_pools_for(cfg.allowed_patterns, answer)[0])


def generate_distractor_pool(cfg: TierConfig, answer: Statement) -> list[Formula]:
    """Formulas that evaluate false under the ground-truth valuation."""
    return list(_pools_for(cfg.allowed_patterns, answer)[1])


def _kind_of(formula: Formula) -> PatternKind | None:
    found = classify(formula)
    return found.kind if isinstance(found, Pattern) else None


def _satisfies(kind: PatternKind | None, requirement: PatternKind) -> bool:
    # Compound negations are negations for requirement purposes; the universal
    # distractor (kind None) satisfies nothing.
    if requirement is PatternKind.NEGATION:
        return kind in (PatternKind.NEGATION, PatternKind.COMPOUND_NEGATION)
    return kind == requirement


_REQUIREMENT_ORDER = (PatternKind.DISJUNCTION, PatternKind.NEGATION)


def assemble(question: AtomicQuestion, cfg: TierConfig, seed: int) -> CombinatorialQuestion:
    """Sample, label, and shuffle one combinatorial question.

    Draw order, fully determined by the seed: (1) answer count uniform in the
    tier range; (2) each required pattern satisfied from the valid pool while
    correct slots remain (falling back to the distractor pool); (3) remaining
    correct options weighted by pattern kind, without replacement; (4)
    remaining distractors uniform without replacement; (5) one Fisher-Yates
    shuffle of the assembled options.
    """
    statements, _ = atomize(question)
    answer = question.answer_index()
    rng = PortableRng(seed)

    valid_pool = [(f, _kind_of(f)) for f in generate_valid_pool(cfg, answer)]
    distractor_pool = [(f, _kind_of(f)) for f in generate_distractor_pool(cfg, answer)]

    n_correct = rng.randint(cfg.n_correct_min, cfg.n_correct_max)
    n_distract = cfg.n_options - n_correct
    if n_correct > len(valid_pool) or n_distract > len(distractor_pool):
        raise InfeasibleTierError(
            f"tier infeasible for this configuration: need {n_correct} valid and "
            f"{n_distract} distractor options, pools hold "
            f"{len(valid_pool)}/{len(distractor_pool)}"
        )

    correct_picks: list[tuple[Formula, PatternKind | None]] = []
    distract_picks: list[tuple[Formula, PatternKind | None]] = []

    def take_weighted(pool: list[tuple[Formula, PatternKind | None]], indices: list[int]) -> tuple[Formula, PatternKind | None]:
        weights = [cfg.weight_for(pool[i][1]) if pool[i][1] is not None else 1.0 for i in indices]
        chosen = indices[rng.weighted_index(weights)]
        return pool.pop(chosen)

    def take_uniform(pool: list[tuple[Formula, PatternKind | None]], indices: list[int]) -> tuple[Formula, PatternKind | None]:
        chosen = indices[rng.below(len(indices))]
        return pool.pop(chosen)

    for requirement in _REQUIREMENT_ORDER:
        if requirement not in cfg.required_patterns:
            continue
        if any(_satisfies(kind, requirement) for _, kind in correct_picks + distract_picks):
            continue
        valid_candidates = [i for i, (_, kind) in enumerate(valid_pool) if _satisfies(kind, requirement)]
        if len(correct_picks) < n_correct and valid_candidates:
            correct_picks.append(take_weighted(valid_pool, valid_candidates))
            continue
        distractor_candidates = [
            i for i, (_, kind) in enumerate(distractor_pool) if _satisfies(kind, requirement)
        ]
        if len(distract_picks) < n_distract and distractor_candidates:
            distract_picks.append(take_uniform(distractor_pool, distractor_candidates))
            continue
        raise InfeasibleTierError(
            f"tier infeasible for this configuration: cannot place required pattern "
            f"{requirement.value}"
        )

    while len(correct_picks) < n_correct:
        correct_picks.append(take_weighted(valid_pool, list(range(len(valid_pool)))))
    while len(distract_picks) < n_distract:
        distract_picks.append(take_uniform(distractor_pool, list(range(len(distractor_pool)))))

    labelled = [(formula, True) for formula, _ in correct_picks]
    labelled += [(formula, False) for formula, _ in distract_picks]
    rng.shuffle(labelled)

    entries = []
    answer_letters = set()
    for position, (formula, is_correct) in enumerate(labelled):
        letter = OPTION_LETTERS[position]
        entries.append(OptionEntry(letter, formula, render(formula, question.language)))
        if is_correct:
            answer_letters.add(letter)

    return CombinatorialQuestion(
        id=f"{question.id}::{cfg.tier}::{seed:016x}",
        source_id=question.id,
        context=question.context,
        statements=statements,
        options=tuple(entries),
        answer_set=frozenset(answer_letters),
        tier=cfg.tier,
        seed=seed,
        source_answer=question.answer,
        language=question.language,
        source=question.source,
        reasoning_type=question.reasoning_type,
        extras=dict(question.extras),
    )


def verify(question: CombinatorialQuestion, cfg: TierConfig | None = None) -> VerificationReport:
    """Exhaustive semantic check of a combinatorial question.

    With a fixed four-variable valuation, direct evaluation of every option is
    a complete decision procedure, so the checks below are proofs rather than
    spot tests: (1) each option's truth value matches its answer label, (2)
    the tier's required patterns appear among the options, (3) the answer set
    is neither empty nor the full option list, (4) no two options share a
    canonical formula.
    """
    if cfg is None:
        cfg = tier_config(question.tier)
    truth = question.truth()
    violations: list[Violation] = []

    for entry in question.options:
        value = evaluate(entry.formula, truth)
        labelled_correct = entry.letter in question.answer_set
        if value != labelled_correct:
            violations.append(
                Violation(
                    entry.letter,
                    "truth-mismatch",
                    f"option {entry.letter} evaluates {value} but is labelled "
                    f"{'correct' if labelled_correct else 'incorrect'}",
                )
            )

    kinds = [_kind_of(entry.formula) for entry in question.options]
    for requirement in sorted(cfg.required_patterns, key=lambda k: k.value):
        if not any(_satisfies(kind, requirement) for kind in kinds):
            violations.append(
                Violation("", "missing-required-pattern", f"no option presents {requirement.value}")
            )

    if not 1 <= len(question.answer_set) < len(question.options):
        violations.append(
            Violation(
                "",
                "degenerate-answer-set",
                f"answer set size {len(question.answer_set)} of {len(question.options)} options",
            )
        )

    seen: dict[str, str] = {}
    for entry in question.options:
        key = canonical_key(entry.formula)
        if key in seen:
            violations.append(
                Violation(
                    entry.letter,
                    "duplicate-formula",
                    f"options {seen[key]} and {entry.letter} share formula {key}",
                )
            )
        else:
            seen[key] = entry.letter

    return VerificationReport.from_violations(violations)


MAX_REGENERATION_ATTEMPTS = 16


def synthesize_question(
    question: AtomicQuestion, cfg: TierConfig, seed: int
) -> tuple[CombinatorialQuestion, int]:
    """Assemble with verification, bumping the seed on failure.

    Returns the verified question and the number of regenerations (0 in the
    expected case, since assembly is valid by construction).
    """
    for attempt in range(MAX_REGENERATION_ATTEMPTS):
        candidate = assemble(question, cfg, seed + attempt)
        if verify(candidate, cfg).valid:
            return candidate, attempt
    raise InfeasibleTierError(
        f"question {question.id!r}: no valid assembly after {MAX_REGENERATION_ATTEMPTS} attempts"
    )


@dataclass
class SynthesisSummary:
    total: int = 0
    regenerations: int = 0
    tier_counts: dict[str, int] = field(default_factory=dict)

    @property
    def regeneration_rate(self) -> float:
        return self.regenerations / self.total if self.total else 0.0


def synthesize_bank(
    questions: Iterable[AtomicQuestion],
    seed: int,
    tier_for: Callable[[AtomicQuestion], str],
    n_options: int = 6,
) -> tuple[list[CombinatorialQuestion], SynthesisSummary]:
    """Batch transform; per-question seeds derive from the run seed and question id."""
    summary = SynthesisSummary()
    output: list[CombinatorialQuestion] = []
    for question in questions:
        tier = tier_for(question)
        cfg = tier_config(tier, n_options=n_options)
        question_seed = derive_seed(seed, question.id, tier)
        combinatorial, retries = synthesize_question(question, cfg, question_seed)
        output.append(combinatorial)
        summary.total += 1
        summary.regenerations += retries
        summary.tier_counts[tier] = summary.tier_counts.get(tier, 0) + 1
    return output, summary


# ---------------------------------------------------------------------------
# Baseline transforms
# ---------------------------------------------------------------------------

NOTA_TEXT = "None of the Above"


def apply_nota(question: AtomicQuestion, seed: int = 0) -> AtomicQuestion:
    """Replace the correct option text with "None of the Above".

    The answer index is unchanged, so the correct choice becomes the inserted
    text. Idempotent; the seed is accepted for interface symmetry with the
    other baseline transform but the result does not depend on it.
    """
    question.validate()
    options = dict(question.options)
    options[question.answer] = NOTA_TEXT
    return replace(question, options=options)


def shuffle_options(question: AtomicQuestion, seed: int) -> AtomicQuestion:
    """Seeded permutation of the option texts with the answer index remapped."""
    question.validate()
    texts = question.option_list()
    order = list(range(4))
    PortableRng(seed).shuffle(order)
    shuffled = {STATEMENTS[slot].name: texts[original] for slot, original in enumerate(order)}
    answer_position = question.answer_index() - 1
    new_answer = STATEMENTS[order.index(answer_position)].name
    return replace(question, options=shuffled, answer=new_answer)
