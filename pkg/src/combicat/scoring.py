"""Trace-derived difficulty metrics, their weighted aggregate, and tier cutoffs.

A thinking trace is scored along nine dimensions (reversals, connective
density, hypothesis-elimination cycles, dialectic structure, premise layering,
enumerated steps, epistemic entropy, pivots, abstraction level), each
operationalized as marker counts against editable lexicons. Per-corpus
z-scores of the nine dimensions combine linearly, minus a penalty for
self-contradictory traces, into a single difficulty score that maps onto the
Easy/Medium/Hard/Expert ladder.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Callable, Iterable, Mapping, Sequence


class CorpusError(ValueError):
    """The trace corpus cannot support the requested statistic."""


class ScoringConfigError(ValueError):
    """The weight configuration is incomplete or inconsistent."""


@dataclass(frozen=True)
class ThinkingTrace:
    question_id: str
    text: str
    token_count: int

    @classmethod
    def from_text(cls, question_id: str, text: str) -> "ThinkingTrace":
        return cls(question_id=question_id, text=text, token_count=len(text.split()))


@dataclass(frozen=True)
class CognitiveMetrics:
    """The nine scored dimensions plus the two raw size measurements."""

    oscillation: float
    logic_density: float
    abductive_depth: float
    dialectic_tension: float
    dimensional_awareness: float
    chain_steps: float
    uncertainty_entropy: float
    pivot_count: float
    abstraction_level: float
    token_count: int
    segment_count: int

    def as_dict(self) -> dict[str, float]:
        return {name: float(getattr(self, name)) for name in METRIC_NAMES}


SCORED_METRICS: tuple[str, ...] = (
    "oscillation",
    "logic_density",
    "abductive_depth",
    "dialectic_tension",
    "dimensional_awareness",
    "chain_steps",
    "uncertainty_entropy",
    "pivot_count",
    "abstraction_level",
)
METRIC_NAMES: tuple[str, ...] = SCORED_METRICS + ("token_count", "segment_count")


# ---------------------------------------------------------------------------
# Lexicons
# ---------------------------------------------------------------------------


def _compile_marker(marker: str) -> re.Pattern[str]:
    escaped = re.escape(marker)
    # ASCII word phrases get word boundaries; anything else (CJK, punctuation)
    # matches as a plain substring.
    if re.fullmatch(r"[a-z0-9' ,-]+", marker, re.IGNORECASE):
        return re.compile(rf"\b{escaped}\b", re.IGNORECASE)
    return re.compile(escaped)


@dataclass(frozen=True)
class MarkerLexicons:
    """Compiled marker lists per metric, merged over one or more locales."""

    reversal: tuple[re.Pattern[str], ...]
    connectives: tuple[re.Pattern[str], ...]
    epistemic: Mapping[str, tuple[re.Pattern[str], ...]]
    pivot: tuple[re.Pattern[str], ...]
    hypothesis: tuple[re.Pattern[str], ...]
    elimination: tuple[re.Pattern[str], ...]
    thesis: tuple[re.Pattern[str], ...]
    antithesis: tuple[re.Pattern[str], ...]
    synthesis: tuple[re.Pattern[str], ...]
    premise_layer: tuple[re.Pattern[str], ...]
    deduction_step: tuple[re.Pattern[str], ...]
    abstraction: Mapping[int, tuple[re.Pattern[str], ...]]
    contradiction: tuple[re.Pattern[str], ...]

    @property
    def epistemic_class_count(self) -> int:
        return len(self.epistemic)


def _merge_raw(locales: Sequence[Mapping[str, Any]]) -> dict[str, Any]:
    merged: dict[str, Any] = {}
    for raw in locales:
        for key, value in raw.items():
            if isinstance(value, dict):
                bucket = merged.setdefault(key, {})
                for sub, markers in value.items():
                    bucket.setdefault(sub, []).extend(markers)
            else:
                merged.setdefault(key, []).extend(value)
    return merged


def _build_lexicons(raw: Mapping[str, Any]) -> MarkerLexicons:
    def plain(key: str) -> tuple[re.Pattern[str], ...]:
        return tuple(_compile_marker(m) for m in raw.get(key, []))

    return MarkerLexicons(
        reversal=plain("reversal"),
        connectives=plain("connectives"),
        epistemic={
            cls: tuple(_compile_marker(m) for m in markers)
            for cls, markers in raw.get("epistemic", {}).items()
        },
        pivot=plain("pivot"),
        hypothesis=plain("hypothesis"),
        elimination=plain("elimination"),
        thesis=plain("thesis"),
        antithesis=plain("antithesis"),
        synthesis=plain("synthesis"),
        premise_layer=plain("premise_layer"),
        deduction_step=plain("deduction_step"),
        abstraction={
            int(level): tuple(_compile_marker(m) for m in markers)
            for level, markers in raw.get("abstraction", {}).items()
        },
        contradiction=plain("contradiction"),
    )


def load_lexicons(locale: str = "both", paths: Sequence[str] | None = None) -> MarkerLexicons:
    """Load marker lexicons from packaged data or explicit JSON files."""
    raws: list[Mapping[str, Any]] = []
    if paths:
        for path in paths:
            with open(path, encoding="utf-8") as fh:
                raws.append(json.load(fh))
    else:
        wanted = ("en", "zh") if locale == "both" else (locale,)
        for name in wanted:
            raw = resources.files("combicat.data").joinpath(f"lexicon_{name}.json").read_text("utf-8")
            raws.append(json.loads(raw))
    return _build_lexicons(_merge_raw(raws))


# ---------------------------------------------------------------------------
# Metric extraction
# ---------------------------------------------------------------------------


def _count_hits(patterns: Iterable[re.Pattern[str]], text: str) -> int:
    return sum(len(p.findall(text)) for p in patterns)


def _positions(patterns: Iterable[re.Pattern[str]], text: str) -> list[int]:
    hits: list[int] = []
    for p in patterns:
        hits.extend(m.start() for m in p.finditer(text))
    return sorted(hits)


def _ordered_pairs(first: list[int], second: list[int]) -> int:
    """Non-overlapping (first, later second) pairs, scanned left to right."""
    count = 0
    pending = 0
    events = sorted([(pos, 0) for pos in first] + [(pos, 1) for pos in second])
    for _, kind in events:
        if kind == 0:
            pending += 1
        elif pending > 0:
            pending -= 1
            count += 1
    return count


def _ordered_triples(first: list[int], second: list[int], third: list[int]) -> int:
    """Non-overlapping in-order triples, greedy left-to-right matching."""
    count = 0
    stage_one = 0
    stage_two = 0
    events = sorted([(p, 0) for p in first] + [(p, 1) for p in second] + [(p, 2) for p in third])
    for _, kind in events:
        if kind == 0:
            stage_one += 1
        elif kind == 1 and stage_one > 0:
            stage_one -= 1
            stage_two += 1
        elif kind == 2 and stage_two > 0:
            stage_two -= 1
            count += 1
    return count


_NUMBERED_STEP_RE = re.compile(r"^\s*(?:step\s+\d+|\d+[.)])\s", re.IGNORECASE | re.MULTILINE)
_SEGMENT_SPLIT_RE = re.compile(r"\n\s*\n")


def shannon_entropy(counts: Iterable[int]) -> float:
    """Entropy in nats of the empirical distribution over positive counts."""
    positive = [c for c in counts if c > 0]
    total = sum(positive)
    if total == 0:
        return 0.0
    return -sum((c / total) * math.log(c / total) for c in positive)


def extract_metrics(trace: ThinkingTrace, lexicons: MarkerLexicons) -> CognitiveMetrics:
    """Score one trace against the lexicons.

    All counts are case-insensitive non-overlapping marker matches. Enumerated
    steps also count numbered line heads ("1.", "2)", "Step 3"). Segments are
    blank-line-delimited blocks. An empty trace scores zero everywhere.
    """
    text = trace.text
    if not text.strip():
        return CognitiveMetrics(0, 0.0, 0, 0, 0, 0, 0.0, 0, 0, trace.token_count, 0)

    reversal_hits = _count_hits(lexicons.reversal, text)
    connective_hits = _count_hits(lexicons.connectives, text)
    logic_density = 100.0 * connective_hits / max(1, trace.token_count)

    abductive = _ordered_pairs(
        _positions(lexicons.hypothesis, text), _positions(lexicons.elimination, text)
    )
    dialectic = _ordered_triples(
        _positions(lexicons.thesis, text),
        _positions(lexicons.antithesis, text),
        _positions(lexicons.synthesis, text),
    )
    dimensional = _count_hits(lexicons.premise_layer, text)
    chain_steps = _count_hits(lexicons.deduction_step, text) + len(_NUMBERED_STEP_RE.findall(text))

    epistemic_counts = [_count_hits(markers, text) for markers in lexicons.epistemic.values()]
    entropy = shannon_entropy(epistemic_counts)

    pivots = _count_hits(lexicons.pivot, text)
    abstraction = 0
    for level in sorted(lexicons.abstraction):
        if _count_hits(lexicons.abstraction[level], text) > 0:
            abstraction = max(abstraction, level)

    segments = [block for block in _SEGMENT_SPLIT_RE.split(text) if block.strip()]

    return CognitiveMetrics(
        oscillation=reversal_hits,
        logic_density=logic_density,
        abductive_depth=abductive,
        dialectic_tension=dialectic,
        dimensional_awareness=dimensional,
        chain_steps=chain_steps,
        uncertainty_entropy=entropy,
        pivot_count=pivots,
        abstraction_level=abstraction,
        token_count=trace.token_count,
        segment_count=len(segments),
    )


# ---------------------------------------------------------------------------
# Normalization and the aggregate score
# ---------------------------------------------------------------------------

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class CorpusStats:
    """Frozen per-metric corpus mean/std used to score items consistently."""

    means: Mapping[str, float]
    stds: Mapping[str, float]
    corpus_size: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "means": dict(self.means),
            "stds": dict(self.stds),
            "corpus_size": self.corpus_size,
            "std_floor": STD_FLOOR,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CorpusStats":
        return cls(
            means=dict(data["means"]), stds=dict(data["stds"]), corpus_size=int(data["corpus_size"])
        )


def z_normalize(corpus: Sequence[CognitiveMetrics]) -> tuple[list[dict[str, float]], CorpusStats]:
    """Population z-scores of the nine scored metrics over the corpus.

    A floor on the standard deviation keeps constant metrics at z = 0 instead
    of dividing by zero.
    """
    if len(corpus) < 2:
        raise CorpusError(f"insufficient corpus: {len(corpus)} trace(s), need at least 2")
    means: dict[str, float] = {}
    stds: dict[str, float] = {}
    for name in SCORED_METRICS:
        values = [float(getattr(m, name)) for m in corpus]
        mean = sum(values) / len(values)
        variance = sum((v - mean) ** 2 for v in values) / len(values)
        means[name] = mean
        stds[name] = max(math.sqrt(variance), STD_FLOOR)
    stats = CorpusStats(means=means, stds=stds, corpus_size=len(corpus))
    return [normalize_against(stats, m) for m in corpus], stats


def normalize_against(stats: CorpusStats, metrics: CognitiveMetrics) -> dict[str, float]:
    """Score one item against frozen corpus statistics."""
    return {
        name: (float(getattr(metrics, name)) - stats.means[name]) / stats.stds[name]
        for name in SCORED_METRICS
    }


@dataclass(frozen=True)
class ScoringConfig:
    """Weights and offsets for the aggregate score; all overridable from files."""

    weights: Mapping[str, float] = field(
        default_factory=lambda: {name: 1.0 for name in SCORED_METRICS}
    )
    penalty_rate: float = 1.0
    offset: float = 23.2

    def __post_init__(self) -> None:
        missing = [name for name in SCORED_METRICS if name not in self.weights]
        if missing:
            raise ScoringConfigError(f"missing weight(s) for {', '.join(missing)}")
        if self.penalty_rate < 0:
            raise ScoringConfigError("penalty rate must be non-negative")

    def to_dict(self) -> dict[str, Any]:
        return {
            "weights": dict(self.weights),
            "penalty_rate": self.penalty_rate,
            "offset": self.offset,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ScoringConfig":
        weights = {name: 1.0 for name in SCORED_METRICS}
        weights.update(data.get("weights", {}))
        return cls(
            weights=weights,
            penalty_rate=float(data.get("penalty_rate", 1.0)),
            offset=float(data.get("offset", 23.2)),
        )


@dataclass(frozen=True)
class GoldScore:
    value: float
    tier: str
    components: Mapping[str, float]
    penalty: float


def stratify(value: float) -> str:
    """Tier cutoffs: below 20 Easy, then 25 and 30 split Medium/Hard/Expert."""
    if value < 20:
        return "Easy"
    if value < 25:
        return "Medium"
    if value < 30:
        return "Hard"
    return "Expert"


def gold_score(
    z: Mapping[str, float],
    config: ScoringConfig | None = None,
    fallacy_score: float = 0.0,
) -> GoldScore:
    """Weighted sum of z-scores around the offset, minus the fallacy penalty."""
    config = config or ScoringConfig()
    if fallacy_score < 0:
        raise ValueError("fallacy score must be non-negative")
    missing = [name for name in SCORED_METRICS if name not in z]
    if missing:
        raise ScoringConfigError(f"missing z-score(s) for {', '.join(missing)}")
    weighted = sum(config.weights[name] * z[name] for name in SCORED_METRICS)
    penalty = config.penalty_rate * fallacy_score
    value = config.offset + weighted - penalty
    return GoldScore(
        value=value,
        tier=stratify(value),
        components={name: z[name] for name in SCORED_METRICS},
        penalty=penalty,
    )


# ---------------------------------------------------------------------------
# Fallacy detection
# ---------------------------------------------------------------------------

_ASSERTION_RE = re.compile(
    r"(?:final answer|the answer|answer)\s*(?:is|:|should be|must be)\s*\(?([A-Ha-h])\)?(?![A-Za-z])",
    re.IGNORECASE,
)
_FINAL_LETTERS_RE = re.compile(r"(?<![A-Za-z])([A-H])(?![A-Za-z])")

FallacyChecker = Callable[[ThinkingTrace], float]


def _final_answer_span(text: str) -> tuple[set[str], int]:
    """Letters on the last non-empty line and that line's character offset."""
    last_letters: set[str] = set()
    last_start = len(text)
    offset = 0
    for line in text.splitlines(keepends=True):
        stripped = line.strip().strip("*_`\"'").strip()
        if stripped:
            last_letters = {m.group(1).upper() for m in _FINAL_LETTERS_RE.finditer(stripped)}
            last_start = offset
        offset += len(line)
    return last_letters, last_start


def fallacy_penalty(
    trace: ThinkingTrace,
    lexicons: MarkerLexicons | None = None,
    checker: FallacyChecker | None = None,
) -> float:
    """Count internal contradictions in a trace.

    The default rule totals (a) assertions "the answer is X" whose letter is
    absent from the final-line answer, and (b) explicit self-contradiction
    markers. Pass ``checker`` to substitute a stronger detector.
    """
    if checker is not None:
        return float(checker(trace))
    lexicons = lexicons or load_lexicons()
    final_letters, final_start = _final_answer_span(trace.text)
    mismatches = 0
    if final_letters:
        for match in _ASSERTION_RE.finditer(trace.text):
            if match.start() >= final_start:
                continue
            if match.group(1).upper() not in final_letters:
                mismatches += 1
    contradictions = _count_hits(lexicons.contradiction, trace.text)
    return float(mismatches + contradictions)
