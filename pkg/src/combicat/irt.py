"""Three-parameter logistic response model and the adaptive testing engine.

Ability is estimated as the posterior mean over a fixed 61-node quadrature
grid on [-6, 6] under a standard-normal prior. Items are chosen greedily by
information at the current estimate, and a session stops once the posterior
standard deviation falls under the target or the item budget is spent. A dual
run estimates ability independently on the Base (atomic) and Combinatorial
(hardened) subsets and reports the gap between the two estimates.

Reductions over grid nodes use ``math.fsum`` so that symmetric posteriors give
exactly symmetric estimates (a fresh session's mean is exactly zero).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

BASE_SUBSET = "Base"
COMBINATORIAL_SUBSET = "Combinatorial"

DEFAULT_MAX_ITEMS = 60
DEFAULT_SE_TARGET = 0.3


class BankExhaustedError(RuntimeError):
    """No eligible unadministered item remains for the session."""


class DuplicateAdministrationError(RuntimeError):
    """An item was offered to the same session twice."""


class CalibrationInputError(ValueError):
    """Difficulty calibration received non-finite or negative inputs."""


@dataclass(frozen=True)
class ItemParams:
    """3PL parameter triple for one bank item."""

    item_id: str
    a: float
    b: float
    c: float
    subset: str = BASE_SUBSET

    def __post_init__(self) -> None:
        if not self.a > 0:
            raise ValueError(f"item {self.item_id!r}: discrimination must be positive")
        if not 0 <= self.c < 1:
            raise ValueError(f"item {self.item_id!r}: guessing parameter must lie in [0, 1)")

    def to_record(self) -> dict:
        return {
            "item_id": self.item_id,
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "subset": self.subset,
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "ItemParams":
        return cls(
            item_id=str(record["item_id"]),
            a=float(record["a"]),
            b=float(record["b"]),
            c=float(record["c"]),
            subset=str(record.get("subset", BASE_SUBSET)),
        )


@dataclass(frozen=True)
class QuadratureGrid:
    """Equally spaced ability nodes with normalized standard-normal weights."""

    nodes: tuple[float, ...]
    prior_weights: tuple[float, ...]

    @classmethod
    def regular(cls, n_nodes: int, lo: float, hi: float) -> "QuadratureGrid":
        if n_nodes < 3 or hi <= lo:
            raise ValueError("grid needs at least 3 nodes and a positive span")
        step = (hi - lo) / (n_nodes - 1)
        center = (n_nodes - 1) / 2
        middle = (lo + hi) / 2
        # Centered construction keeps symmetric grids exactly symmetric, with
        # the middle node of an odd grid landing on `middle` with no rounding.
        nodes = tuple((i - center) * step + middle for i in range(n_nodes))
        density = [math.exp(-0.5 * x * x) for x in nodes]
        total = math.fsum(density)
        weights = tuple(d / total for d in density)
        return cls(nodes=nodes, prior_weights=weights)

    @classmethod
    def standard(cls) -> "QuadratureGrid":
        """The engine default: 61 nodes spaced 0.2 apart across [-6, 6]."""
        return cls.regular(61, -6.0, 6.0)

    def __len__(self) -> int:
        return len(self.nodes)


def probability_3pl(theta: float, item: ItemParams) -> float:
    """Probability of a correct response: c + (1 - c) / (1 + exp(-a (theta - b)))."""
    exponent = -item.a * (theta - item.b)
    # Clamp to avoid overflow at extreme abilities; the result saturates anyway.
    if exponent > 700:
        logistic = 0.0
    elif exponent < -700:
        logistic = 1.0
    else:
        logistic = 1.0 / (1.0 + math.exp(exponent))
    return item.c + (1.0 - item.c) * logistic


def fisher_information(theta: float, item: ItemParams, exact_3pl: bool = False) -> float:
    """Item information at an ability level.

    The default is the quoted selection criterion a^2 P (1 - P). The exact 3PL
    information a^2 ((P - c) / (1 - c))^2 (1 - P) / P, which accounts for the
    guessing floor, sits behind the ``exact_3pl`` switch and is off by default.
    """
    p = probability_3pl(theta, item)
    if not exact_3pl:
        return item.a * item.a * p * (1.0 - p)
    if p <= 0.0:
        return 0.0
    ratio = (p - item.c) / (1.0 - item.c)
    return item.a * item.a * ratio * ratio * (1.0 - p) / p


@dataclass(frozen=True)
class AbilityEstimate:
    theta_hat: float
    se: float
    n_administered: int

    def to_record(self) -> dict:
        return {"theta_hat": self.theta_hat, "se": self.se, "n_administered": self.n_administered}


def _posterior_estimate(grid: QuadratureGrid, posterior: Sequence[float], n: int) -> AbilityEstimate:
    theta = math.fsum(node * w for node, w in zip(grid.nodes, posterior))
    variance = math.fsum(w * (node - theta) ** 2 for node, w in zip(grid.nodes, posterior))
    return AbilityEstimate(theta_hat=theta, se=math.sqrt(max(variance, 0.0)), n_administered=n)


@dataclass
class CatSession:
    """Posterior state and administration history for one subset."""

    subset: str
    grid: QuadratureGrid
    posterior: list[float]
    administered: list[tuple[str, bool]] = field(default_factory=list)
    skipped: set[str] = field(default_factory=set)
    estimate: AbilityEstimate = field(init=False)

    def __post_init__(self) -> None:
        self.estimate = _posterior_estimate(self.grid, self.posterior, len(self.administered))

    @classmethod
    def start(cls, subset: str = BASE_SUBSET, grid: QuadratureGrid | None = None) -> "CatSession":
        grid = grid or QuadratureGrid.standard()
        return cls(subset=subset, grid=grid, posterior=list(grid.prior_weights))

    def administered_ids(self) -> set[str]:
        return {item_id for item_id, _ in self.administered}

    def accuracy(self) -> float:
        if not self.administered:
            return 0.0
        return sum(1 for _, correct in self.administered if correct) / len(self.administered)


def eap_update(session: CatSession, item: ItemParams, correct: bool) -> CatSession:
    """Fold one response into the posterior and refresh the estimate."""
    if item.item_id in session.administered_ids():
        raise DuplicateAdministrationError(f"item {item.item_id!r} already administered")
    updated = []
    for node, weight in zip(session.grid.nodes, session.posterior):
        p = probability_3pl(node, item)
        updated.append(weight * (p if correct else 1.0 - p))
    total = math.fsum(updated)
    if total <= 0.0:
        raise RuntimeError("posterior vanished; response pattern has zero likelihood on the grid")
    session.posterior = [w / total for w in updated]
    session.administered.append((item.item_id, bool(correct)))
    session.estimate = _posterior_estimate(session.grid, session.posterior, len(session.administered))
    return session


def _eligible(session: CatSession, bank: Iterable[ItemParams]) -> list[ItemParams]:
    used = session.administered_ids() | session.skipped
    return [item for item in bank if item.subset == session.subset and item.item_id not in used]


def select_next(session: CatSession, bank: Sequence[ItemParams], exact_3pl: bool = False) -> str:
    """Unadministered item with maximal information at the current estimate.

    Ties go to the lexicographically smallest item id so replays are stable.
    """
    theta = session.estimate.theta_hat
    best_id: str | None = None
    best_info = -math.inf
    for item in _eligible(session, bank):
        info = fisher_information(theta, item, exact_3pl=exact_3pl)
        if info > best_info or (info == best_info and (best_id is None or item.item_id < best_id)):
            best_id = item.item_id
            best_info = info
    if best_id is None:
        raise BankExhaustedError(f"bank exhausted for subset {session.subset!r}")
    return best_id


def should_terminate(
    session: CatSession,
    max_items: int = DEFAULT_MAX_ITEMS,
    se_target: float = DEFAULT_SE_TARGET,
    bank: Sequence[ItemParams] | None = None,
) -> bool:
    """Stop once precise enough, out of budget, or out of items."""
    if session.estimate.se < se_target:
        return True
    if len(session.administered) >= max_items:
        return True
    if bank is not None and not _eligible(session, bank):
        return True
    return False


# ---------------------------------------------------------------------------
# Parameter assignment
# ---------------------------------------------------------------------------

_TIER_DISCRIMINATION = {"Easy": 0.8, "Medium": 1.2, "Hard": 1.6, "Expert": 2.0}


def discrimination_for_tier(tier: str) -> float:
    """Discrimination grows with the tier's operator complexity."""
    try:
        return _TIER_DISCRIMINATION[tier]
    except KeyError:
        raise ValueError(f"unknown tier {tier!r}") from None


def guessing_for_options(n_options: int) -> float:
    """Pseudo-guessing as the inverse of the option count."""
    if n_options < 2:
        raise ValueError(f"option count {n_options} leaves nothing to guess among")
    return 1.0 / n_options


def calibrate_difficulty(
    s_gold: float, logic_density: float, token_count: float, segment_count: float
) -> float:
    """Difficulty from cognitive features of the item's scoring trace.

    b = (score - 72) / 54 + 0.1 (density - 2) + log10(max(1, tokens)) - 3.17
        + (segments - 100) / 200
    """
    inputs = (s_gold, logic_density, token_count, segment_count)
    if not all(math.isfinite(x) for x in inputs):
        raise CalibrationInputError(f"non-finite calibration inputs {inputs}")
    if token_count < 0 or segment_count < 0:
        raise CalibrationInputError("token and segment counts must be non-negative")
    return (
        (s_gold - 72.0) / 54.0
        + 0.1 * (logic_density - 2.0)
        + math.log10(max(1.0, token_count))
        - 3.17
        + (segment_count - 100.0) / 200.0
    )


# ---------------------------------------------------------------------------
# Session protocol
# ---------------------------------------------------------------------------

# Answers an administered item: True/False for a scored response, None when the
# responder failed (timeout, unparseable output) and the item should be skipped.
ItemResponder = Callable[[ItemParams], "bool | None"]

StepCallback = Callable[[str, dict], None]


def run_cat_session(
    bank: Sequence[ItemParams],
    respond: ItemResponder,
    subset: str = BASE_SUBSET,
    grid: QuadratureGrid | None = None,
    max_items: int = DEFAULT_MAX_ITEMS,
    se_target: float = DEFAULT_SE_TARGET,
    on_step: StepCallback | None = None,
    strict_incorrect: bool = False,
    exact_3pl: bool = False,
) -> CatSession:
    """Select/administer/update loop for one subset until termination.

    Responder failures are skipped and logged by default so transport trouble
    cannot pass for low ability; ``strict_incorrect`` scores them wrong
    instead.
    """
    session = CatSession.start(subset=subset, grid=grid)
    items_by_id = {item.item_id: item for item in bank}
    step = 0
    while not should_terminate(session, max_items=max_items, se_target=se_target, bank=bank):
        item_id = select_next(session, bank, exact_3pl=exact_3pl)
        item = items_by_id[item_id]
        outcome = respond(item)
        if outcome is None and not strict_incorrect:
            session.skipped.add(item_id)
            if on_step is not None:
                on_step(subset, {"step": step, "item_id": item_id, "skipped": True})
            step += 1
            continue
        correct = bool(outcome)
        eap_update(session, item, correct)
        if on_step is not None:
            on_step(
                subset,
                {
                    "step": step,
                    "item_id": item_id,
                    "theta_hat": session.estimate.theta_hat,
                    "se": session.estimate.se,
                    "response": correct,
                },
            )
        step += 1
    return session


@dataclass(frozen=True)
class DualReport:
    """Outcome of independent Base and Combinatorial sessions."""

    base: AbilityEstimate
    comb: AbilityEstimate
    base_accuracy: float
    comb_accuracy: float

    @property
    def delta_theta(self) -> float:
        return self.base.theta_hat - self.comb.theta_hat

    def to_record(self) -> dict:
        return {
            "base": self.base.to_record(),
            "comb": self.comb.to_record(),
            "base_accuracy": self.base_accuracy,
            "comb_accuracy": self.comb_accuracy,
            "delta_theta": self.delta_theta,
        }


def run_dual_session(
    respond: ItemResponder,
    base_bank: Sequence[ItemParams],
    comb_bank: Sequence[ItemParams],
    grid: QuadratureGrid | None = None,
    max_items: int = DEFAULT_MAX_ITEMS,
    se_target: float = DEFAULT_SE_TARGET,
    on_step: StepCallback | None = None,
    strict_incorrect: bool = False,
    exact_3pl: bool = False,
) -> DualReport:
    """Independent adaptive sessions on both subsets with a shared responder."""
    if not base_bank or not comb_bank:
        raise ValueError("both banks must be non-empty for a dual run")
    base = run_cat_session(
        base_bank,
        respond,
        subset=BASE_SUBSET,
        grid=grid,
        max_items=max_items,
        se_target=se_target,
        on_step=on_step,
        strict_incorrect=strict_incorrect,
        exact_3pl=exact_3pl,
    )
    comb = run_cat_session(
        comb_bank,
        respond,
        subset=COMBINATORIAL_SUBSET,
        grid=grid,
        max_items=max_items,
        se_target=se_target,
        on_step=on_step,
        strict_incorrect=strict_incorrect,
        exact_3pl=exact_3pl,
    )
    return DualReport(
        base=base.estimate,
        comb=comb.estimate,
        base_accuracy=base.accuracy(),
        comb_accuracy=comb.accuracy(),
    )
