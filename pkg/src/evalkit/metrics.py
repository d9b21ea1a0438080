"""User-utility metrics built on a reward/cost view of a conversation.

One conversation's utility is the ratio of its weighted reward sum to its
weighted cost sum. The concrete metrics are instantiations with a single
factor on each side:

* success rate (SR): reward = dialogue contains an accepted
  recommendation, cost = 1;
* successful recommendation round ratio (SRRR): reward = accepted rounds,
  cost = number of rounds;
* reward per dialogue length (RDL): reward = accepted items, cost = total
  utterance count;
* recall@N: reward = recommended items matching the ground truth, cost =
  N per recommendation turn (micro-averaged over turns).

SR, SRRR, and RDL are macro-averaged: each dialogue is scored first, then
dialogue scores are averaged per system.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Mapping, Sequence

from .dialogue import (
    ACCEPT,
    Corpus,
    Dialogue,
    RECOMMEND,
    REJECT,
    Speaker,
)
from .errors import UnannotatedDialogueError

ITEM_SLOT = "TITLE"

OUTCOME_ACCEPTED = "accepted"
OUTCOME_REJECTED = "rejected"
OUTCOME_UNRESOLVED = "unresolved"

MICRO = "micro"
MACRO = "macro"

RECALL_VARIANT_STANDARD = "standard"
# The published formula carries an extra 1/(total utterances) prefactor on
# top of conventional micro-averaged recall; it is implemented verbatim
# under this name and never silently merged with the standard variant.
RECALL_VARIANT_LENGTH_NORMALIZED = "length_normalized"

METRIC_SR = "SR"
METRIC_SRRR = "SRRR"
METRIC_RDL = "RDL"

VALID_METRICS = ("sr", "srrr", "rdl", "recall")


@dataclass(frozen=True)
class RewardFactor:
    """A named, weighted, per-dialogue reward term."""

    name: str
    weight: float
    evaluator: Callable[[Dialogue], float]

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError(f"reward weight for {self.name!r} must be >= 0")


@dataclass(frozen=True)
class CostFactor:
    """A named, weighted, per-dialogue cost term."""

    name: str
    weight: float
    evaluator: Callable[[Dialogue], float]

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError(f"cost weight for {self.name!r} must be >= 0")


@dataclass(frozen=True)
class RecommendationRound:
    """Span from a system Recommend to the user's Accept/Reject decision."""

    start_index: int
    end_index: int
    outcome: str
    items: tuple[str, ...] = ()

    def __post_init__(self):
        if self.outcome not in (OUTCOME_ACCEPTED, OUTCOME_REJECTED, OUTCOME_UNRESOLVED):
            raise ValueError(f"unknown round outcome {self.outcome!r}")
        if not self.start_index < self.end_index:
            raise ValueError("round must satisfy start_index < end_index")
        object.__setattr__(self, "items", tuple(self.items))


@dataclass(frozen=True)
class MetricReport:
    """Per-system values for one metric under one aggregation mode."""

    metric: str
    aggregation: str
    per_system: Mapping[str, float]
    per_dialogue: Mapping[str, float] | None = None
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if self.aggregation not in (MICRO, MACRO):
            raise ValueError("aggregation must be micro or macro")
        object.__setattr__(self, "warnings", tuple(self.warnings))

    def to_record(self) -> dict[str, Any]:
        record: dict[str, Any] = {
            "metric": self.metric,
            "aggregation": self.aggregation,
            "per_system": dict(self.per_system),
        }
        if self.per_dialogue is not None:
            record["per_dialogue"] = dict(self.per_dialogue)
        record["warnings"] = list(self.warnings)
        return record

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "MetricReport":
        return cls(
            metric=record["metric"],
            aggregation=record["aggregation"],
            per_system=dict(record["per_system"]),
            per_dialogue=(
                dict(record["per_dialogue"]) if "per_dialogue" in record else None
            ),
            warnings=tuple(record.get("warnings", ())),
        )


def _require_annotated(dialogue: Dialogue) -> None:
    if not dialogue.has_acts():
        raise UnannotatedDialogueError(
            f"dialogue {dialogue.dialogue_id} carries no act annotations"
        )


def _require_nonempty(corpus: Corpus) -> None:
    if not corpus.dialogues:
        raise ValueError("corpus has no dialogues")


def _round_items(utterance) -> list[str]:
    items = []
    for act in utterance.acts:
        if act.intent == RECOMMEND:
            items.extend(act.slot_values(ITEM_SLOT))
    items.extend(utterance.items)
    return items


def segment_rounds(dialogue: Dialogue) -> list[RecommendationRound]:
    """Split a dialogue into recommendation rounds.

    A round opens at a system utterance carrying a Recommend act and closes
    at the first later user utterance carrying Accept or Reject; further
    Recommend acts before that decision extend the open round. A round
    still open at dialogue end is returned as unresolved with
    ``end_index`` one past the last utterance.
    """
    _require_annotated(dialogue)
    rounds: list[RecommendationRound] = []
    open_start: int | None = None
    open_items: list[str] = []

    for utterance in dialogue.utterances:
        if utterance.speaker is Speaker.SYSTEM and utterance.has_intent(RECOMMEND):
            if open_start is None:
                open_start = utterance.index
                open_items = []
            seen = set(open_items)
            for item in _round_items(utterance):
                if item not in seen:
                    open_items.append(item)
                    seen.add(item)
        elif utterance.speaker is Speaker.USER and open_start is not None:
            decision = next(
                (a for a in utterance.acts if a.intent in (ACCEPT, REJECT)), None
            )
            if decision is not None:
                outcome = OUTCOME_ACCEPTED if decision.intent == ACCEPT else OUTCOME_REJECTED
                rounds.append(
                    RecommendationRound(
                        start_index=open_start,
                        end_index=utterance.index,
                        outcome=outcome,
                        items=tuple(open_items),
                    )
                )
                open_start = None
                open_items = []

    if open_start is not None:
        rounds.append(
            RecommendationRound(
                start_index=open_start,
                end_index=len(dialogue.utterances),
                outcome=OUTCOME_UNRESOLVED,
                items=tuple(open_items),
            )
        )
    return rounds


def dialogue_success(dialogue: Dialogue) -> bool:
    """True when any user utterance carries an Accept act."""
    _require_annotated(dialogue)
    return any(
        u.speaker is Speaker.USER and u.has_intent(ACCEPT) for u in dialogue.utterances
    )


def dialogue_srrr(dialogue: Dialogue) -> float:
    """Fraction of this dialogue's rounds that end in acceptance.

    Dialogues with no rounds score 0; unresolved rounds stay in the
    denominator as unsuccessful.
    """
    rounds = segment_rounds(dialogue)
    if not rounds:
        return 0.0
    accepted = sum(1 for r in rounds if r.outcome == OUTCOME_ACCEPTED)
    return accepted / len(rounds)


def accepted_item_count(dialogue: Dialogue) -> int:
    """Number of accepted item identifiers in a dialogue.

    Distinct item-slot values across user Accept acts are counted once
    each; an Accept act with no item slots credits the single unnamed item
    it resolves, i.e. counts as 1.
    """
    _require_annotated(dialogue)
    named: list[str] = []
    seen: set[str] = set()
    bare = 0
    for utterance in dialogue.utterances:
        if utterance.speaker is not Speaker.USER:
            continue
        for act in utterance.acts:
            if act.intent != ACCEPT:
                continue
            values = act.slot_values(ITEM_SLOT)
            if values:
                for value in values:
                    if value not in seen:
                        named.append(value)
                        seen.add(value)
            else:
                bare += 1
    return len(named) + bare


def dialogue_rdl(dialogue: Dialogue) -> float:
    """Accepted items divided by the dialogue's total utterance count."""
    if len(dialogue) == 0:
        raise ValueError(f"dialogue {dialogue.dialogue_id} is empty")
    return accepted_item_count(dialogue) / len(dialogue)


def _macro_report(
    corpus: Corpus, metric: str, per_dialogue_fn: Callable[[Dialogue], float]
) -> MetricReport:
    _require_nonempty(corpus)
    per_dialogue: dict[str, float] = {}
    per_system: dict[str, float] = {}
    for crs_id, dialogues in corpus.by_system().items():
        values = []
        for dialogue in dialogues:
            value = per_dialogue_fn(dialogue)
            per_dialogue[dialogue.dialogue_id] = value
            values.append(value)
        per_system[crs_id] = sum(values) / len(values)
    return MetricReport(
        metric=metric,
        aggregation=MACRO,
        per_system=per_system,
        per_dialogue=per_dialogue,
    )


def success_rate(corpus: Corpus) -> MetricReport:
    """Per system: fraction of dialogues containing an accepted recommendation."""
    report = _macro_report(
        corpus, METRIC_SR, lambda d: 1.0 if dialogue_success(d) else 0.0
    )
    assert all(0.0 <= v <= 1.0 for v in report.per_system.values())
    return report


def srrr(corpus: Corpus) -> MetricReport:
    """Per system: mean per-dialogue fraction of rounds ending in acceptance."""
    report = _macro_report(corpus, METRIC_SRRR, dialogue_srrr)
    assert all(0.0 <= v <= 1.0 for v in report.per_system.values())
    return report


def rdl(corpus: Corpus) -> MetricReport:
    """Per system: mean accepted items per utterance across dialogues."""
    report = _macro_report(corpus, METRIC_RDL, dialogue_rdl)
    assert all(v >= 0.0 for v in report.per_system.values())
    return report


def _recommendation_turns(dialogue: Dialogue):
    """(index, recommended items) for each system turn that recommends."""
    turns = []
    for utterance in dialogue.utterances:
        if utterance.speaker is not Speaker.SYSTEM:
            continue
        recommends = utterance.has_intent(RECOMMEND)
        items = list(utterance.items)
        if not items and recommends:
            for act in utterance.acts:
                if act.intent == RECOMMEND:
                    items.extend(act.slot_values(ITEM_SLOT))
        if items or recommends:
            turns.append((utterance.index, tuple(items)))
    return turns


def recall_at_n(
    corpus: Corpus,
    ground_truth: Mapping[tuple[str, int], Any],
    n: int,
    variant: str = RECALL_VARIANT_STANDARD,
) -> MetricReport:
    """Recall@N over recommendation turns, micro-averaged per system.

    ``ground_truth`` maps (dialogue_id, utterance index) to the set of
    target items for that turn. Each recommended list is truncated to its
    first ``n`` items. The ``standard`` variant is hits over total
    ground-truth items; the ``length_normalized`` variant follows the
    published reward/cost formulation verbatim, dividing hits by N per
    recommendation turn and additionally by the system's total utterance
    count.
    """
    if n <= 0:
        raise ValueError("n must be a positive integer")
    if variant not in (RECALL_VARIANT_STANDARD, RECALL_VARIANT_LENGTH_NORMALIZED):
        raise ValueError(
            f"variant must be {RECALL_VARIANT_STANDARD!r} or "
            f"{RECALL_VARIANT_LENGTH_NORMALIZED!r}"
        )
    _require_nonempty(corpus)

    warnings: list[str] = []
    per_system: dict[str, float] = {}
    for crs_id, dialogues in corpus.by_system().items():
        hits = 0
        truth_total = 0
        rec_turns = 0
        utterance_total = 0
        for dialogue in dialogues:
            utterance_total += len(dialogue)
            for index, recommended in _recommendation_turns(dialogue):
                key = (dialogue.dialogue_id, index)
                if key not in ground_truth:
                    warnings.append(
                        f"no ground truth for ({dialogue.dialogue_id}, {index}); turn skipped"
                    )
                    continue
                targets = set(ground_truth[key])
                shortlist = recommended[:n]
                hits += len(targets & set(shortlist))
                truth_total += len(targets)
                rec_turns += 1
        if variant == RECALL_VARIANT_STANDARD:
            per_system[crs_id] = hits / truth_total if truth_total else 0.0
        else:
            denominator = n * rec_turns
            inner = hits / denominator if denominator else 0.0
            per_system[crs_id] = inner / utterance_total if utterance_total else 0.0

    if variant == RECALL_VARIANT_LENGTH_NORMALIZED:
        warnings.append(
            "length_normalized divides by the total utterance count on top of "
            "per-turn recall; values are not comparable to standard recall"
        )
    return MetricReport(
        metric=f"Recall@{n}[{variant}]",
        aggregation=MICRO,
        per_system=per_system,
        warnings=tuple(warnings),
    )


def utility(
    dialogue: Dialogue,
    rewards: Sequence[RewardFactor],
    costs: Sequence[CostFactor],
) -> float:
    """Weighted reward sum over weighted cost sum for one conversation."""
    total_reward = sum(f.weight * f.evaluator(dialogue) for f in rewards)
    total_cost = sum(f.weight * f.evaluator(dialogue) for f in costs)
    if total_cost <= 0:
        raise ValueError(
            f"dialogue {dialogue.dialogue_id}: total cost is zero; utility undefined"
        )
    return total_reward / total_cost


def accepted_items_reward(weight: float = 1.0) -> RewardFactor:
    return RewardFactor("accepted_items", weight, lambda d: float(accepted_item_count(d)))


def success_reward(weight: float = 1.0) -> RewardFactor:
    return RewardFactor("success", weight, lambda d: 1.0 if dialogue_success(d) else 0.0)


def accepted_rounds_reward(weight: float = 1.0) -> RewardFactor:
    return RewardFactor(
        "accepted_rounds",
        weight,
        lambda d: float(
            sum(1 for r in segment_rounds(d) if r.outcome == OUTCOME_ACCEPTED)
        ),
    )


def dialogue_length_cost(weight: float = 1.0) -> CostFactor:
    return CostFactor("dialogue_length", weight, lambda d: float(len(d)))


def round_count_cost(weight: float = 1.0) -> CostFactor:
    return CostFactor("round_count", weight, lambda d: float(len(segment_rounds(d))))


def constant_cost(weight: float = 1.0) -> CostFactor:
    return CostFactor("constant", weight, lambda d: 1.0)


def evaluate_system(
    corpus: Corpus,
    metrics: Sequence[str],
    ground_truth: Mapping[tuple[str, int], Any] | None = None,
    n: int = 1,
) -> list[MetricReport]:
    """Compute the requested metrics over a corpus, one report per metric.

    Metric names: ``sr``, ``srrr``, ``rdl``, ``recall`` (case-insensitive).
    Requesting ``recall`` requires ``ground_truth`` and yields both recall
    variants as separate reports.
    """
    requested = [m.lower() for m in metrics]
    unknown = [m for m in requested if m not in VALID_METRICS]
    if unknown:
        raise ValueError(
            f"unknown metric(s) {', '.join(sorted(unknown))}; "
            f"valid names: {', '.join(VALID_METRICS)}"
        )
    if "recall" in requested and ground_truth is None:
        raise ValueError("recall requires ground-truth target items")

    reports: list[MetricReport] = []
    for name in requested:
        if name == "sr":
            reports.append(success_rate(corpus))
        elif name == "srrr":
            reports.append(srrr(corpus))
        elif name == "rdl":
            reports.append(rdl(corpus))
        elif name == "recall":
            assert ground_truth is not None
            reports.append(recall_at_n(corpus, ground_truth, n, RECALL_VARIANT_STANDARD))
            reports.append(
                recall_at_n(corpus, ground_truth, n, RECALL_VARIANT_LENGTH_NORMALIZED)
            )
    return reports
