"""Command-line pipeline: synthesize | score-traces | calibrate | evaluate | report.

Every subcommand is deterministic given its inputs, flags, and seed. Flags
override values from an optional JSON config file, and the resolved
configuration is hashed into every emitted report so a run can be reproduced
from its artifacts alone.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from typing import Any, Mapping, Sequence

from . import bankio
from .bankio import CalibratedItem
from .harness import (
    EndpointConfig,
    EndpointResponder,
    EvalBanks,
    EvalItem,
    JsonlWriter,
    MemorizationRespondent,
    Responder,
    RunSettings,
    ScoreReport,
    SimulatedRespondent,
    aggregate_log_records,
    run_benchmark,
)
from .irt import (
    BASE_SUBSET,
    COMBINATORIAL_SUBSET,
    calibrate_difficulty,
    discrimination_for_tier,
    guessing_for_options,
)
from .rng import PortableRng, derive_seed
from .scoring import (
    CorpusStats,
    ScoringConfig,
    extract_metrics,
    fallacy_penalty,
    gold_score,
    load_lexicons,
    normalize_against,
    z_normalize,
)
from .synthesis import (
    TIER_NAMES,
    AtomicQuestion,
    InfeasibleTierError,
    apply_nota,
    shuffle_options,
    synthesize_bank,
)

log = logging.getLogger(__name__)


def _config_hash(resolved: Mapping[str, Any]) -> str:
    canonical = json.dumps(resolved, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _load_config(path: str | None) -> dict[str, Any]:
    if not path:
        return {}
    return bankio.load_json(path)


def _resolve(flag_value: Any, config: Mapping[str, Any], key: str, default: Any) -> Any:
    """Flag wins over config file wins over the built-in default."""
    if flag_value is not None:
        return flag_value
    if key in config:
        return config[key]
    return default


# ---------------------------------------------------------------------------
# synthesize
# ---------------------------------------------------------------------------


def _parse_tier_split(text: str) -> dict[str, float]:
    split: dict[str, float] = {}
    for part in text.split(","):
        tier, _, weight = part.partition(":")
        tier = tier.strip()
        if tier not in TIER_NAMES:
            raise ValueError(f"unknown tier {tier!r} in split")
        split[tier] = float(weight)
    if not split or sum(split.values()) <= 0:
        raise ValueError("tier split must carry positive weights")
    return split


def cmd_synthesize(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    seed = int(_resolve(args.seed, config, "seed", 0))
    tier = _resolve(args.tier, config, "tier", None)
    tier_split = _resolve(args.tier_split, config, "tier_split", None)
    n_options = int(_resolve(args.n_options, config, "n_options", 6))
    if tier is None and tier_split is None:
        tier = "Hard"
    if tier is not None and tier not in TIER_NAMES:
        print(f"error: unknown tier {tier!r}", file=sys.stderr)
        return 1

    questions = bankio.load_atomic_bank(args.bank)

    if tier_split is not None:
        split = _parse_tier_split(tier_split) if isinstance(tier_split, str) else dict(tier_split)
        names = sorted(split)
        weights = [split[name] for name in names]

        def tier_for(question: AtomicQuestion) -> str:
            rng = PortableRng(derive_seed(seed, question.id, "tier-assignment"))
            return names[rng.weighted_index(weights)]

    else:

        def tier_for(question: AtomicQuestion) -> str:
            return tier

    try:
        combinatorial, summary = synthesize_bank(questions, seed, tier_for, n_options=n_options)
    except InfeasibleTierError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    bankio.save_comb_bank(args.out, combinatorial)

    print(f"synthesized {summary.total} questions -> {args.out}")
    for name in TIER_NAMES:
        count = summary.tier_counts.get(name, 0)
        if count:
            print(f"  {name:<7} {count:>6}  ({100.0 * count / summary.total:.1f}%)")
    print(
        f"  regenerations {summary.regenerations} "
        f"(rate {100.0 * summary.regeneration_rate:.2f}%)"
    )
    return 0


# ---------------------------------------------------------------------------
# score-traces
# ---------------------------------------------------------------------------


def cmd_score_traces(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    locale = _resolve(args.locale, config, "locale", "both")
    lexicons = load_lexicons(locale=locale, paths=args.lexicon or None)
    scoring = (
        ScoringConfig.from_dict(bankio.load_json(args.weights_config))
        if args.weights_config
        else ScoringConfig()
    )

    traces = bankio.load_traces(args.traces)
    metrics = [extract_metrics(trace, lexicons) for trace in traces]

    if args.stats:
        stats = CorpusStats.from_dict(bankio.load_json(args.stats)["stats"])
        z_rows = [normalize_against(stats, m) for m in metrics]
    else:
        try:
            z_rows, stats = z_normalize(metrics)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1

    rows = []
    for trace, metric, z in zip(traces, metrics, z_rows):
        penalty_score = fallacy_penalty(trace, lexicons)
        score = gold_score(z, scoring, penalty_score)
        rows.append(
            {
                "question_id": trace.question_id,
                "metrics": metric.as_dict(),
                "z": z,
                "fallacy": penalty_score,
                "gold_score": score.value,
                "penalty": score.penalty,
                "tier": score.tier,
            }
        )
    bankio.write_jsonl(args.out, rows)

    resolved = {
        "command": "score-traces",
        "locale": locale,
        "scoring": scoring.to_dict(),
        "frozen_stats": bool(args.stats),
        "traces": os.path.basename(args.traces),
    }
    stats_payload = {
        "stats": stats.to_dict(),
        "scoring": scoring.to_dict(),
        "config_hash": _config_hash(resolved),
    }
    # The stats file is part of the contract: without it, later runs cannot
    # score new traces against this corpus. Default next to the scores.
    stats_out = args.stats_out or (args.out + ".stats.json")
    if not args.stats:
        bankio.save_json(stats_out, stats_payload)
    elif args.stats_out:
        bankio.save_json(args.stats_out, stats_payload)

    tiers = [row["tier"] for row in rows]
    print(f"scored {len(rows)} traces -> {args.out}")
    for name in TIER_NAMES:
        count = tiers.count(name)
        if count:
            print(f"  {name:<7} {count:>6}")
    return 0


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------

_FEATURE_KEYS = ("gold_score", "logic_density", "token_count", "segment_count")


def _features_from(row: Mapping[str, Any]) -> dict[str, float] | None:
    """Pull calibration features from a score row or an inline record."""
    metrics = row.get("metrics", row)
    try:
        features = {
            "gold_score": float(row["gold_score"]),
            "logic_density": float(metrics["logic_density"]),
            "token_count": float(metrics["token_count"]),
            "segment_count": float(metrics["segment_count"]),
        }
    except (KeyError, TypeError, ValueError):
        return None
    tier = row.get("tier")
    if tier is not None:
        features["tier"] = tier
    return features


def cmd_calibrate(args: argparse.Namespace) -> int:
    kind = bankio.sniff_bank_kind(args.bank)
    if kind == "empty":
        print("error: bank holds no questions", file=sys.stderr)
        return 1

    scores: dict[str, Mapping[str, Any]] = {}
    if args.scores:
        rows, skipped = bankio.read_jsonl(args.scores)
        if skipped:
            log.warning("skipped %d corrupt score rows", skipped)
        scores = {str(row["question_id"]): row for row in rows if "question_id" in row}

    items: list[CalibratedItem] = []
    skipped_questions = 0

    if kind == "atomic":
        subset = args.subset or BASE_SUBSET
        for question in bankio.load_atomic_bank(args.bank):
            row = scores.get(question.id, question.extras)
            features = _features_from(row) if row else None
            tier = (features or {}).get("tier") or question.extras.get("tier")
            if features is None or tier is None:
                log.warning("question %s: missing calibration features, skipped", question.id)
                skipped_questions += 1
                continue
            n_options = int(args.n_options or 4)
            items.append(
                _calibrated_item(question.id, subset, str(tier), features, n_options)
            )
    else:
        subset = args.subset or COMBINATORIAL_SUBSET
        for question in bankio.load_comb_bank(args.bank):
            row = scores.get(question.id) or scores.get(question.source_id) or question.extras
            features = _features_from(row) if row else None
            if features is None:
                log.warning("question %s: missing calibration features, skipped", question.id)
                skipped_questions += 1
                continue
            n_options = int(args.n_options or len(question.options))
            items.append(
                _calibrated_item(question.id, subset, question.tier, features, n_options)
            )

    if not items:
        print("error: no questions could be calibrated", file=sys.stderr)
        return 1

    bankio.save_item_bank(args.out, items)
    print(f"calibrated {len(items)} items -> {args.out} ({skipped_questions} skipped)")
    return 0


def _calibrated_item(
    question_id: str, subset: str, tier: str, features: Mapping[str, float], n_options: int
) -> CalibratedItem:
    b = calibrate_difficulty(
        features["gold_score"],
        features["logic_density"],
        features["token_count"],
        features["segment_count"],
    )
    return CalibratedItem(
        item_id=f"{subset}:{question_id}",
        question_id=question_id,
        subset=subset,
        tier=tier,
        a=discrimination_for_tier(tier),
        b=b,
        c=guessing_for_options(n_options),
        n_options=n_options,
    )


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def _parse_simulator(spec: str) -> dict[str, float] | str:
    if spec == "memorization":
        return "memorization"
    if spec.startswith("3pl:"):
        parts = [p for p in spec[len("3pl:") :].split(",") if p]
        if len(parts) == 1:
            theta = float(parts[0])
            return {BASE_SUBSET: theta, COMBINATORIAL_SUBSET: theta}
        if len(parts) == 2:
            return {BASE_SUBSET: float(parts[0]), COMBINATORIAL_SUBSET: float(parts[1])}
    raise ValueError(f"cannot parse simulator spec {spec!r} (use '3pl:<base>,<comb>' or 'memorization')")


def _join_params(
    questions: Sequence[Any], item_bank: list[CalibratedItem] | None
) -> list[EvalItem]:
    by_question = {item.question_id: item.item_params() for item in item_bank or []}
    return [EvalItem(question=q, params=by_question.get(q.id)) for q in questions]


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    seed = int(_resolve(args.seed, config, "seed", 0))
    mode = _resolve(args.mode, config, "mode", "static")
    max_items = int(_resolve(args.max_items, config, "max_items", 60))
    se_target = float(_resolve(args.se_target, config, "se_target", 0.3))
    simulator = _resolve(args.simulator, config, "simulator", None)
    endpoint_path = _resolve(args.endpoint, config, "endpoint", None)
    baselines = _resolve(args.baseline, config, "baseline", "")

    if (simulator is None) == (endpoint_path is None):
        print("error: provide exactly one of --simulator or --endpoint", file=sys.stderr)
        return 1

    base_questions = bankio.load_atomic_bank(args.base_bank) if args.base_bank else []
    comb_questions = bankio.load_comb_bank(args.comb_bank) if args.comb_bank else []
    base_items = bankio.load_item_bank(args.base_items) if args.base_items else None
    comb_items = bankio.load_item_bank(args.comb_items) if args.comb_items else None

    banks = EvalBanks(
        base=_join_params(base_questions, base_items),
        comb=_join_params(comb_questions, comb_items),
    )
    if mode == "static" and baselines:
        for name in str(baselines).split(","):
            name = name.strip()
            if not name:
                continue
            if name == "nota":
                variants = [apply_nota(q) for q in base_questions]
            elif name == "shuffle":
                variants = [shuffle_options(q, derive_seed(seed, q.id, "shuffle")) for q in base_questions]
            else:
                print(f"error: unknown baseline {name!r}", file=sys.stderr)
                return 1
            banks.baselines[name] = _join_params(variants, base_items)

    responder: Responder
    if simulator is not None:
        try:
            parsed = _parse_simulator(str(simulator))
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        responder_seed = derive_seed(seed, "responder", str(simulator))
        if parsed == "memorization":
            responder = MemorizationRespondent(seed=responder_seed)
        else:
            responder = SimulatedRespondent(parsed, seed=responder_seed)
            missing = [
                item.question.id
                for bank in (banks.base, banks.comb, *banks.baselines.values())
                for item in bank
                if item.params is None
            ]
            if missing:
                print(
                    f"error: ability simulator needs item parameters; missing for "
                    f"{len(missing)} question(s), e.g. {missing[0]!r}",
                    file=sys.stderr,
                )
                return 1
    else:
        responder = EndpointResponder(EndpointConfig.from_dict(bankio.load_json(endpoint_path)))

    resolved = {
        "command": "evaluate",
        "seed": seed,
        "mode": mode,
        "max_items": max_items,
        "se_target": se_target,
        "simulator": simulator,
        "endpoint": endpoint_path,
        "baseline": baselines,
        "base_bank": os.path.basename(args.base_bank or ""),
        "comb_bank": os.path.basename(args.comb_bank or ""),
    }
    settings = RunSettings(
        seed=seed,
        max_items=max_items,
        se_target=se_target,
        strict_incorrect=bool(args.strict_incorrect),
        config_hash=_config_hash(resolved),
    )

    os.makedirs(args.out, exist_ok=True)
    log_path = os.path.join(args.out, "run.jsonl")
    report_path = os.path.join(args.out, "report.json")
    with JsonlWriter(log_path) as writer:
        try:
            report = run_benchmark(responder, banks, mode=mode, settings=settings, writer=writer)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1

    bankio.save_json(report_path, report.to_record())
    _print_report(report)
    print(f"log: {log_path}")
    print(f"report: {report_path}")
    return 0


def _print_report(report: ScoreReport) -> None:
    print(f"mode {report.mode}  seed {report.seed}  config {report.config_hash}")
    for label, result in report.subsets.items():
        print(
            f"  {label:<8} n={result.n:<5} accuracy={result.accuracy:.4f} "
            f"f1={result.mean_f1:.4f} parse_failures={result.parse_failures} "
            f"transport_failures={result.transport_failures}"
        )
    if report.dual is not None:
        dual = report.dual
        print(
            f"  theta base {dual.base.theta_hat:+.3f} (se {dual.base.se:.3f}, "
            f"n {dual.base.n_administered})  comb {dual.comb.theta_hat:+.3f} "
            f"(se {dual.comb.se:.3f}, n {dual.comb.n_administered})"
        )
        print(f"  delta_theta {dual.delta_theta:+.3f}")


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def cmd_report(args: argparse.Namespace) -> int:
    rows, skipped = bankio.read_jsonl(args.log)
    responses = [row for row in rows if row.get("kind") == "response"]
    steps = [row for row in rows if row.get("kind") == "cat_step"]

    if not responses and not steps:
        print("no records")
        if skipped:
            print(f"skipped lines: {skipped}")
        return 0

    aggregates = aggregate_log_records(rows)
    if responses and len(responses) <= 32:
        print("per-item results:")
        for row in responses:
            print(
                f"  {row['question_id']:<40} subset={row['subset']:<8} "
                f"exact={str(bool(row['exact'])):<5} f1={row['f1']:.3f}"
            )
    for label in sorted(aggregates):
        result = aggregates[label]
        print(
            f"{label:<8} n={result.n:<5} accuracy={result.accuracy:.4f} f1={result.mean_f1:.4f} "
            f"parse_failures={result.parse_failures} transport_failures={result.transport_failures}"
        )

    theta_lines: dict[str, dict[str, Any]] = {}
    for step in steps:
        if "theta_hat" in step:
            theta_lines[step["subset"]] = step
    for subset, last in sorted(theta_lines.items()):
        print(f"{subset:<8} theta={last['theta_hat']:+.3f} se={last['se']:.3f}")
    if {"base", "comb"} <= set(theta_lines):
        delta = theta_lines["base"]["theta_hat"] - theta_lines["comb"]["theta_hat"]
        print(f"delta_theta {delta:+.3f}")
    if skipped:
        print(f"skipped lines: {skipped}")

    if args.report:
        embedded = bankio.load_json(args.report)
        mismatches = _replay_mismatches(embedded, aggregates)
        if mismatches:
            for line in mismatches:
                print(f"replay mismatch: {line}", file=sys.stderr)
            return 1
        print("replay check: ok")
    return 0


def _replay_mismatches(embedded: Mapping[str, Any], aggregates: Mapping[str, Any]) -> list[str]:
    problems = []
    for label, stored in embedded.get("subsets", {}).items():
        recomputed = aggregates.get(label)
        if recomputed is None:
            problems.append(f"subset {label!r} missing from log")
            continue
        for key in ("n", "accuracy", "mean_f1", "parse_failures", "transport_failures"):
            want = stored[key]
            have = getattr(recomputed, key)
            if abs(float(want) - float(have)) > 1e-12:
                problems.append(f"{label}.{key}: report {want} vs log {have}")
    return problems


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="combicat",
        description="Combinatorial hardening of multiple-choice banks with adaptive evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="transform an atomic bank into combinatorial questions")
    p.add_argument("--bank", required=True, help="atomic question bank (JSON)")
    p.add_argument("--out", required=True, help="output combinatorial bank (JSON)")
    p.add_argument("--tier", help="single tier for every question")
    p.add_argument("--tier-split", dest="tier_split", help="e.g. Easy:20,Medium:40,Hard:30,Expert:10")
    p.add_argument("--seed", type=int)
    p.add_argument("--m", dest="n_options", type=int, help="options per combinatorial question (5-8)")
    p.add_argument("--config", help="JSON config file; flags win")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("score-traces", help="extract metrics and difficulty scores from traces")
    p.add_argument("--traces", required=True, help="JSONL of {question_id, text}")
    p.add_argument("--out", required=True, help="output scores (JSONL)")
    p.add_argument("--stats-out", dest="stats_out", help="output corpus stats (JSON)")
    p.add_argument("--stats", help="frozen corpus stats to score against (JSON)")
    p.add_argument("--locale", choices=["en", "zh", "both"])
    p.add_argument("--lexicon", action="append", help="custom lexicon JSON (repeatable)")
    p.add_argument("--weights-config", dest="weights_config", help="scoring weights JSON")
    p.add_argument("--config", help="JSON config file; flags win")
    p.set_defaults(func=cmd_score_traces)

    p = sub.add_parser("calibrate", help="derive 3PL item parameters from scored questions")
    p.add_argument("--bank", required=True, help="question bank (atomic or combinatorial)")
    p.add_argument("--scores", help="score rows from score-traces (JSONL)")
    p.add_argument("--out", required=True, help="output item bank (JSON)")
    p.add_argument("--subset", choices=[BASE_SUBSET, COMBINATORIAL_SUBSET])
    p.add_argument("--m", dest="n_options", type=int, help="override option count for guessing")
    p.add_argument("--config", help="JSON config file; flags win")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", help="run a responder over the banks")
    p.add_argument("--base-bank", dest="base_bank", help="atomic bank (JSON)")
    p.add_argument("--comb-bank", dest="comb_bank", help="combinatorial bank (JSON)")
    p.add_argument("--base-items", dest="base_items", help="calibrated items for the base bank")
    p.add_argument("--comb-items", dest="comb_items", help="calibrated items for the combinatorial bank")
    p.add_argument("--mode", choices=["static", "cat"])
    p.add_argument("--simulator", help="'3pl:<base_theta>,<comb_theta>' or 'memorization'")
    p.add_argument("--endpoint", help="endpoint config JSON for a live model")
    p.add_argument("--baseline", help="comma list of static baselines: nota,shuffle")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-items", dest="max_items", type=int)
    p.add_argument("--se-target", dest="se_target", type=float)
    p.add_argument("--strict-incorrect", dest="strict_incorrect", action="store_true",
                   help="score transport failures as incorrect instead of skipping")
    p.add_argument("--out", required=True, help="output directory for run.jsonl and report.json")
    p.add_argument("--config", help="JSON config file; flags win")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="summarize a run log and verify its report")
    p.add_argument("--log", required=True, help="run log (JSONL)")
    p.add_argument("--report", help="report.json to cross-check against the log")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
