"""Propositional formulas over the four statement variables of a multi-select item.

Each source question contributes four statements labelled I..IV. Formulas are
immutable trees built from Var/Not/And/Or nodes and are evaluated against a
truth assignment over the four variables. A small family of option patterns
(exactness, disjunction, negation, compound negation) expands to canonical
formula shapes; those canonical shapes are what rendering and pool
deduplication operate on.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass
from importlib import resources
from itertools import combinations
from typing import Union


class Statement(enum.IntEnum):
    """The four statement labels, totally ordered I < II < III < IV."""

    I = 1
    II = 2
    III = 3
    IV = 4


STATEMENTS: tuple[Statement, ...] = tuple(Statement)
STATEMENT_LABELS: tuple[str, ...] = tuple(s.name for s in STATEMENTS)


def statement_from_label(label: str) -> Statement:
    try:
        return Statement[label]
    except KeyError:
        raise ValueError(f"unknown statement label {label!r}") from None


@dataclass(frozen=True, slots=True)
class Var:
    index: Statement


@dataclass(frozen=True, slots=True)
class Not:
    child: "Formula"


@dataclass(frozen=True, slots=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True, slots=True)
class Or:
    left: "Formula"
    right: "Formula"


Formula = Union[Var, Not, And, Or]


@dataclass(frozen=True, slots=True)
class Assignment:
    """Total truth valuation over the four statement variables."""

    values: tuple[bool, bool, bool, bool]

    @classmethod
    def ground_truth(cls, answer: Statement) -> "Assignment":
        """Valuation with exactly the answered statement true."""
        return cls(tuple(s == answer for s in STATEMENTS))

    @classmethod
    def from_row_index(cls, row: int) -> "Assignment":
        """Row of the 16-row enumeration, lexicographic in (I, II, III, IV)."""
        if not 0 <= row < 16:
            raise ValueError(f"row index {row} out of range")
        return cls(tuple(bool((row >> shift) & 1) for shift in (3, 2, 1, 0)))

    def value(self, index: Statement) -> bool:
        return self.values[index - 1]

    def is_ground_truth(self) -> bool:
        return sum(self.values) == 1

    def answer(self) -> Statement:
        if not self.is_ground_truth():
            raise ValueError("assignment does not have exactly one true variable")
        return STATEMENTS[self.values.index(True)]


def evaluate(formula: Formula, assignment: Assignment) -> bool:
    """Standard propositional semantics; total and side-effect free."""
    if isinstance(formula, Var):
        return assignment.value(formula.index)
    if isinstance(formula, Not):
        return not evaluate(formula.child, assignment)
    if isinstance(formula, And):
        return evaluate(formula.left, assignment) and evaluate(formula.right, assignment)
    if isinstance(formula, Or):
        return evaluate(formula.left, assignment) or evaluate(formula.right, assignment)
    raise TypeError(f"not a formula node: {formula!r}")


def truth_table(formula: Formula) -> list[tuple[Assignment, bool]]:
    """All 16 assignments in lexicographic (I, II, III, IV) order with values."""
    rows = []
    for i in range(16):
        assignment = Assignment.from_row_index(i)
        rows.append((assignment, evaluate(formula, assignment)))
    return rows


def depth(formula: Formula) -> int:
    if isinstance(formula, Var):
        return 1
    if isinstance(formula, Not):
        return 1 + depth(formula.child)
    return 1 + max(depth(formula.left), depth(formula.right))


# ---------------------------------------------------------------------------
# Option patterns
# ---------------------------------------------------------------------------


class PatternKind(enum.Enum):
    EXACTNESS = "exactness"
    DISJUNCTION = "disjunction"
    NEGATION = "negation"
    COMPOUND_NEGATION = "compound_negation"


@dataclass(frozen=True, slots=True)
class Pattern:
    """One member of the option-pattern family, prior to formula expansion.

    Two-index kinds store their indices in ascending order so that structurally
    equal patterns compare equal.
    """

    kind: PatternKind
    first: Statement
    second: Statement | None = None

    def __post_init__(self) -> None:
        two_index = self.kind in (PatternKind.DISJUNCTION, PatternKind.COMPOUND_NEGATION)
        if two_index:
            if self.second is None:
                raise ValueError(f"{self.kind.value} pattern needs two indices")
            if self.second == self.first:
                raise ValueError("pattern indices must differ")
            if self.second < self.first:
                low, high = self.second, self.first
                object.__setattr__(self, "first", low)
                object.__setattr__(self, "second", high)
        elif self.second is not None:
            raise ValueError(f"{self.kind.value} pattern takes one index")

    def expand(self) -> Formula:
        """Canonical formula for this pattern."""
        if self.kind is PatternKind.EXACTNESS:
            node: Formula = Var(self.first)
            for other in STATEMENTS:
                if other != self.first:
                    node = And(node, Not(Var(other)))
            return node
        if self.kind is PatternKind.DISJUNCTION:
            assert self.second is not None
            return Or(Var(self.first), Var(self.second))
        if self.kind is PatternKind.NEGATION:
            return Not(Var(self.first))
        assert self.second is not None
        return And(Not(Var(self.first)), Not(Var(self.second)))


def all_patterns() -> list[Pattern]:
    """Every pattern instance over the four statements."""
    patterns: list[Pattern] = [Pattern(PatternKind.EXACTNESS, s) for s in STATEMENTS]
    patterns += [Pattern(PatternKind.DISJUNCTION, a, b) for a, b in combinations(STATEMENTS, 2)]
    patterns += [Pattern(PatternKind.NEGATION, s) for s in STATEMENTS]
    patterns += [Pattern(PatternKind.COMPOUND_NEGATION, a, b) for a, b in combinations(STATEMENTS, 2)]
    return patterns


def universal_none() -> Formula:
    """The always-wrong distractor: every statement negated."""
    node: Formula = Not(Var(Statement.I))
    for s in STATEMENTS[1:]:
        node = And(node, Not(Var(s)))
    return node


def _flatten_and(formula: Formula) -> list[Formula]:
    if isinstance(formula, And):
        return _flatten_and(formula.left) + _flatten_and(formula.right)
    return [formula]


def classify(formula: Formula) -> Pattern | str | None:
    """Recognize a formula as a pattern expansion, the universal distractor, or neither.

    Returns the Pattern, the string "universal_none", or None for free-form
    formulas. Recognition is up to conjunct order, so any tree shape of the
    same conjunct multiset classifies identically.
    """
    if isinstance(formula, Not) and isinstance(formula.child, Var):
        return Pattern(PatternKind.NEGATION, formula.child.index)
    if isinstance(formula, Or) and isinstance(formula.left, Var) and isinstance(formula.right, Var):
        if formula.left.index != formula.right.index:
            return Pattern(PatternKind.DISJUNCTION, formula.left.index, formula.right.index)
        return None
    if isinstance(formula, And):
        conjuncts = _flatten_and(formula)
        positives = [c.index for c in conjuncts if isinstance(c, Var)]
        negatives = [c.child.index for c in conjuncts if isinstance(c, Not) and isinstance(c.child, Var)]
        if len(positives) + len(negatives) != len(conjuncts):
            return None
        if len(set(positives)) != len(positives) or len(set(negatives)) != len(negatives):
            return None
        if len(positives) == 1 and sorted(negatives) == sorted(s for s in STATEMENTS if s != positives[0]):
            return Pattern(PatternKind.EXACTNESS, positives[0])
        if not positives and len(negatives) == 2:
            return Pattern(PatternKind.COMPOUND_NEGATION, negatives[0], negatives[1])
        if not positives and sorted(negatives) == list(STATEMENTS):
            return "universal_none"
    return None


# ---------------------------------------------------------------------------
# Canonical form and serialization
# ---------------------------------------------------------------------------


def serialize(formula: Formula) -> str:
    """Compact prefix text form, e.g. ``AND(VAR(I),NOT(VAR(II)))``."""
    if isinstance(formula, Var):
        return f"VAR({formula.index.name})"
    if isinstance(formula, Not):
        return f"NOT({serialize(formula.child)})"
    if isinstance(formula, And):
        return f"AND({serialize(formula.left)},{serialize(formula.right)})"
    if isinstance(formula, Or):
        return f"OR({serialize(formula.left)},{serialize(formula.right)})"
    raise TypeError(f"not a formula node: {formula!r}")


class FormulaSyntaxError(ValueError):
    """Raised when a serialized formula cannot be parsed."""


_TOKEN_RE = re.compile(r"[A-Z]+|[(),]")


def parse_formula(text: str) -> Formula:
    """Inverse of :func:`serialize`; round-trip stable."""
    tokens = _TOKEN_RE.findall(text)
    if "".join(tokens) != text.replace(" ", ""):
        raise FormulaSyntaxError(f"unexpected characters in {text!r}")
    pos = 0

    def peek() -> str | None:
        return tokens[pos] if pos < len(tokens) else None

    def take(expected: str | None = None) -> str:
        nonlocal pos
        if pos >= len(tokens):
            raise FormulaSyntaxError("unexpected end of input")
        token = tokens[pos]
        if expected is not None and token != expected:
            raise FormulaSyntaxError(f"expected {expected!r}, found {token!r}")
        pos += 1
        return token

    def parse_node() -> Formula:
        head = take()
        take("(")
        if head == "VAR":
            label = take()
            node: Formula = Var(statement_from_label(label))
        elif head == "NOT":
            node = Not(parse_node())
        elif head in ("AND", "OR"):
            left = parse_node()
            take(",")
            right = parse_node()
            node = And(left, right) if head == "AND" else Or(left, right)
        else:
            raise FormulaSyntaxError(f"unknown operator {head!r}")
        take(")")
        return node

    result = parse_node()
    if peek() is not None:
        raise FormulaSyntaxError(f"trailing tokens in {text!r}")
    return result


def canonicalize(formula: Formula) -> Formula:
    """Order commutative operands so structurally equal formulas share one form.

    Operands of And/Or are sorted by their canonical serialization, which for
    variables coincides with the statement order I < II < III < IV.
    """
    if isinstance(formula, Var):
        return formula
    if isinstance(formula, Not):
        return Not(canonicalize(formula.child))
    left = canonicalize(formula.left)
    right = canonicalize(formula.right)
    if serialize(right) < serialize(left):
        left, right = right, left
    return And(left, right) if isinstance(formula, And) else Or(left, right)


def canonical_key(formula: Formula) -> str:
    """Deduplication key: serialization of the canonical form."""
    return serialize(canonicalize(formula))


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

_SYMBOLS = {"not": "¬", "and": "∧", "or": "∨"}
_templates_cache: dict[str, dict[str, str]] | None = None


def _templates() -> dict[str, dict[str, str]]:
    global _templates_cache
    if _templates_cache is None:
        raw = resources.files("combicat.data").joinpath("render_templates.json").read_text("utf-8")
        _templates_cache = json.loads(raw)
    return _templates_cache


def render_symbolic(formula: Formula) -> str:
    """Symbolic notation fallback for free-form formulas, e.g. ``(I ∧ II)``."""
    if isinstance(formula, Var):
        return formula.index.name
    if isinstance(formula, Not):
        return _SYMBOLS["not"] + render_symbolic(formula.child)
    op = _SYMBOLS["and"] if isinstance(formula, And) else _SYMBOLS["or"]
    return f"({render_symbolic(formula.left)} {op} {render_symbolic(formula.right)})"


def render(formula: Formula, locale: str = "en") -> str:
    """Natural-language option text for pattern expansions; symbolic otherwise.

    Template wording per locale lives in ``data/render_templates.json`` so the
    phrasing can be edited without touching code.
    """
    tables = _templates()
    if locale not in tables:
        raise ValueError(f"unknown locale {locale!r}")
    table = tables[locale]
    found = classify(formula)
    if found == "universal_none":
        return table["universal_none"]
    if isinstance(found, Pattern):
        text = table[found.kind.value]
        text = text.replace("{i}", found.first.name)
        if found.second is not None:
            text = text.replace("{j}", found.second.name)
        return text
    return render_symbolic(formula)
