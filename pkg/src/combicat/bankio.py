"""Versioned file formats: question banks, item banks, traces, and JSONL logs."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

from .irt import ItemParams
from .scoring import ThinkingTrace
from .synthesis import AtomicQuestion, CombinatorialQuestion

SCHEMA_VERSION = 1


class BankFormatError(ValueError):
    """A bank or log file does not match the expected schema."""


def _unwrap(data: Any, key: str) -> list:
    """Accept either the versioned wrapper object or a bare record array."""
    if isinstance(data, list):
        return data
    if isinstance(data, dict) and key in data:
        return list(data[key])
    raise BankFormatError(f"expected a list or an object with {key!r}")


def _wrap(records: list, key: str) -> dict[str, Any]:
    return {"schema_version": SCHEMA_VERSION, key: records}


def load_atomic_bank(path: str) -> list[AtomicQuestion]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return [AtomicQuestion.from_record(r) for r in _unwrap(data, "questions")]


def save_atomic_bank(path: str, questions: Sequence[AtomicQuestion]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_wrap([q.to_record() for q in questions], "questions"), fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def load_comb_bank(path: str) -> list[CombinatorialQuestion]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return [CombinatorialQuestion.from_record(r) for r in _unwrap(data, "questions")]


def save_comb_bank(path: str, questions: Sequence[CombinatorialQuestion]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_wrap([q.to_record() for q in questions], "questions"), fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def sniff_bank_kind(path: str) -> str:
    """Distinguish atomic from combinatorial bank files by record shape."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    records = _unwrap(data, "questions")
    if not records:
        return "empty"
    return "combinatorial" if "answer_set" in records[0] else "atomic"


@dataclass(frozen=True)
class CalibratedItem:
    """One calibrated bank entry joining a question to its 3PL parameters."""

    item_id: str
    question_id: str
    subset: str
    tier: str
    a: float
    b: float
    c: float
    n_options: int

    def item_params(self) -> ItemParams:
        return ItemParams(item_id=self.item_id, a=self.a, b=self.b, c=self.c, subset=self.subset)

    def to_record(self) -> dict[str, Any]:
        return {
            "item_id": self.item_id,
            "question_id": self.question_id,
            "subset": self.subset,
            "tier": self.tier,
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "n_options": self.n_options,
        }

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "CalibratedItem":
        return cls(
            item_id=str(record["item_id"]),
            question_id=str(record["question_id"]),
            subset=str(record["subset"]),
            tier=str(record["tier"]),
            a=float(record["a"]),
            b=float(record["b"]),
            c=float(record["c"]),
            n_options=int(record["n_options"]),
        )


def load_item_bank(path: str) -> list[CalibratedItem]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return [CalibratedItem.from_record(r) for r in _unwrap(data, "items")]


def save_item_bank(path: str, items: Sequence[CalibratedItem]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_wrap([i.to_record() for i in items], "items"), fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def load_traces(path: str) -> list[ThinkingTrace]:
    """Traces arrive as JSONL rows of {question_id, text}."""
    traces = []
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise BankFormatError(f"{path}:{line_number}: invalid JSON ({exc})") from None
            traces.append(ThinkingTrace.from_text(str(row["question_id"]), str(row.get("text", ""))))
    return traces


def read_jsonl(path: str) -> tuple[list[dict[str, Any]], int]:
    """All parseable rows plus the count of corrupt lines skipped."""
    rows: list[dict[str, Any]] = []
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError:
                skipped += 1
    return rows, skipped


def write_jsonl(path: str, rows: Iterable[Mapping[str, Any]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def save_json(path: str, payload: Mapping[str, Any]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"schema_version": SCHEMA_VERSION, **payload}, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")


def load_json(path: str) -> dict[str, Any]:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
