"""Dialogue-act annotation: rule-based and LLM-backed annotators plus scoring.

The rule annotator is a pure function of (utterance, cue lexicon, item
catalog) and exists as a deterministic offline path; the LLM annotator
builds a few-shot prompt and parses structured act lines out of the reply.
Both produce schema-valid acts only.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from importlib import resources
from typing import Mapping, Sequence

from .catalog import ItemCatalog
from .connectors import LlmGateway
from .dialogue import (
    Corpus,
    DialogueAct,
    IntentSchema,
    OTHER,
    RECOMMEND,
    ACCEPT,
    REJECT,
    Speaker,
    Utterance,
)
from .errors import (
    AlignmentError,
    AnnotationBatchError,
    AnnotationError,
    GatewayError,
    SchemaViolationError,
)

ITEM_SLOT = "TITLE"

_ACT_LINE = re.compile(r"^\s*([A-Za-z_][\w-]*)\s*(?:\((.*)\))?\s*[.;]?\s*$")


@dataclass(frozen=True)
class AnnotatorConfig:
    """How utterances get their acts.

    ``mode`` selects the rule-based or the LLM-backed annotator. LLM mode
    requires few-shot examples; rule mode optionally takes a cue lexicon
    (bundled default otherwise) and an item catalog for title matching.
    """

    schema: IntentSchema
    mode: str = "rule"
    few_shot_examples: tuple[tuple[str, tuple[DialogueAct, ...]], ...] = ()
    prompt_template_id: str = "annotate_acts"
    lexicon: Mapping[str, tuple[str, ...]] | None = None
    catalog: ItemCatalog | None = None

    def __post_init__(self):
        if self.mode not in ("rule", "llm"):
            raise ValueError(f"mode must be 'rule' or 'llm', got {self.mode!r}")
        object.__setattr__(
            self,
            "few_shot_examples",
            tuple((text, tuple(acts)) for text, acts in self.few_shot_examples),
        )
        if self.mode == "llm" and not self.few_shot_examples:
            raise ValueError("llm mode requires few-shot examples")


@dataclass(frozen=True)
class AnnotationQuality:
    """Intent-level annotator quality against gold labels.

    Precision/recall are reported per intent and omitted where undefined
    (no predicted or no gold occurrences respectively). AUCs pool
    one-vs-rest (utterance, intent) decisions per speaker role and are
    None when only one class is present.
    """

    per_intent_precision: Mapping[str, float]
    per_intent_recall: Mapping[str, float]
    auc_user: float | None = None
    auc_system: float | None = None

    def __post_init__(self):
        for name, mapping in (
            ("precision", self.per_intent_precision),
            ("recall", self.per_intent_recall),
        ):
            for intent, value in mapping.items():
                if not 0.0 <= value <= 1.0:
                    raise ValueError(f"{name}[{intent}] out of [0,1]: {value}")
        for name, value in (("auc_user", self.auc_user), ("auc_system", self.auc_system)):
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} out of [0,1]: {value}")


def load_rule_lexicon(source=None) -> dict[str, tuple[str, ...]]:
    """Load an intent→cue-phrase table.

    Each line is ``intent<TAB>cue phrase``; blank lines and ``#`` comments
    are skipped. With no source, the bundled default lexicon is used.
    """
    if source is None:
        text = (
            resources.files("evalkit").joinpath("data/rule_lexicon.tsv").read_text("utf-8")
        )
    elif isinstance(source, str) and "\t" in source:
        text = source
    else:
        with open(source, "r", encoding="utf-8") as handle:
            text = handle.read()
    lexicon: dict[str, list[str]] = {}
    for raw_line in text.splitlines():
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        intent, _, cue = line.partition("\t")
        cue = cue.strip().lower()
        if not intent or not cue:
            raise ValueError(f"bad lexicon line: {raw_line!r}")
        lexicon.setdefault(intent.strip(), []).append(cue)
    return {intent: tuple(cues) for intent, cues in lexicon.items()}


def load_prompt_template(template_id: str) -> str:
    return (
        resources.files("evalkit")
        .joinpath(f"data/prompts/{template_id}.txt")
        .read_text("utf-8")
    )


def _find_titles(text: str, catalog: ItemCatalog | None) -> list[tuple[int, str]]:
    """Catalog titles contained in ``text``, as (position, title) pairs."""
    if catalog is None:
        return []
    lowered = text.lower()
    found = []
    for title in catalog.titles():
        position = lowered.find(title.lower())
        if position >= 0:
            found.append((position, title))
    found.sort()
    return found


class RuleAnnotator:
    """Deterministic cue-phrase annotator with a catalog title-matching pass.

    Repeat runs over the same inputs are byte-identical. Not a substitute
    for model-based annotation quality; it exists as an offline oracle.
    """

    def __init__(
        self,
        schema: IntentSchema,
        lexicon: Mapping[str, Sequence[str]] | None = None,
        catalog: ItemCatalog | None = None,
    ):
        self.schema = schema
        raw = lexicon if lexicon is not None else load_rule_lexicon()
        self.lexicon = {
            intent: tuple(cue.lower() for cue in cues) for intent, cues in raw.items()
        }
        self.catalog = catalog

    def annotate(
        self, utterance: Utterance, context: Sequence[Utterance] = ()
    ) -> tuple[DialogueAct, ...]:
        text = utterance.text.strip()
        if not text:
            return ()
        lowered = text.lower()
        allowed = self.schema.intents_for(utterance.speaker)

        matched: dict[str, int] = {}
        for intent, cues in self.lexicon.items():
            if intent not in allowed:
                continue
            positions = [p for p in (lowered.find(c) for c in cues) if p >= 0]
            if positions:
                matched[intent] = min(positions)

        titles = [title for _, title in _find_titles(text, self.catalog)]
        if titles and utterance.speaker is Speaker.SYSTEM and RECOMMEND in allowed:
            matched.setdefault(RECOMMEND, lowered.find(titles[0].lower()))

        if not matched:
            if OTHER in allowed:
                return (DialogueAct(OTHER),)
            return ()

        acts = []
        for intent in sorted(matched, key=lambda i: (matched[i], i)):
            slots: tuple[tuple[str, str], ...] = ()
            if titles and intent in (RECOMMEND, ACCEPT, REJECT):
                slots = tuple((ITEM_SLOT, title) for title in titles)
            acts.append(DialogueAct(intent, slots))
        return tuple(acts)


def _render_examples(examples) -> str:
    lines = []
    for text, acts in examples:
        rendered = "; ".join(str(act) for act in acts) if acts else "None"
        lines.append(f"Utterance: {text}\nActs: {rendered}")
    return "\n".join(lines)


def _render_context(context: Sequence[Utterance]) -> str:
    if not context:
        return "(start of conversation)"
    return "\n".join(f"{u.speaker.value}: {u.text}" for u in context)


def parse_act_lines(reply: str, schema: IntentSchema, speaker: Speaker) -> tuple[DialogueAct, ...]:
    """Parse an LLM reply into acts.

    Expected format: one act per line, ``Intent(SLOT=value; SLOT=value)`` or
    bare ``Intent``; the literal ``None`` means no act. Raises ValueError on
    any line that does not conform or names an out-of-schema intent.
    """
    acts = []
    for line in reply.strip().splitlines():
        line = line.strip().strip("`")
        if not line:
            continue
        if line.lower() in ("none", "none()", "no act", "[]"):
            continue
        match = _ACT_LINE.match(line)
        if not match:
            raise ValueError(f"unparseable act line: {line!r}")
        intent, slot_text = match.group(1), match.group(2)
        slots = []
        if slot_text and slot_text.strip():
            for chunk in slot_text.split(";"):
                chunk = chunk.strip()
                if not chunk:
                    continue
                name, sep, value = chunk.partition("=")
                if not sep:
                    raise ValueError(f"unparseable slot {chunk!r} in {line!r}")
                slots.append((name.strip(), value.strip().strip("'\"")))
        act = DialogueAct(intent, tuple(slots))
        schema.validate_act(act, speaker)
        acts.append(act)
    return tuple(acts)


class LlmAnnotator:
    """Few-shot prompting annotator backed by a chat-completion gateway."""

    def __init__(self, config: AnnotatorConfig, gateway: LlmGateway):
        if config.mode != "llm":
            raise ValueError("LlmAnnotator requires an llm-mode config")
        self.config = config
        self.gateway = gateway
        self.template = load_prompt_template(config.prompt_template_id)

    def _prompt(self, utterance: Utterance, context: Sequence[Utterance]) -> str:
        allowed = sorted(self.config.schema.intents_for(utterance.speaker))
        return self.template.format(
            schema=", ".join(allowed),
            examples=_render_examples(self.config.few_shot_examples),
            context=_render_context(context),
            utterance=utterance.text,
        )

    def annotate(
        self, utterance: Utterance, context: Sequence[Utterance] = ()
    ) -> tuple[DialogueAct, ...]:
        if not utterance.text.strip():
            return ()
        prompt = self._prompt(utterance, context)
        messages = [{"role": "user", "content": prompt}]
        # One retry on an unparseable reply, then fall back to Other with a
        # warning flag so downstream pipelines stay total.
        for attempt in range(2):
            try:
                reply = self.gateway.complete(messages)
            except GatewayError as exc:
                raise AnnotationError(
                    f"utterance {utterance.index}: gateway failure: {exc}"
                ) from exc
            try:
                return parse_act_lines(reply, self.config.schema, utterance.speaker)
            except (ValueError, SchemaViolationError):
                continue
        return (DialogueAct(OTHER, extra={"warning": "llm-reply-unparseable"}),)


def build_annotator(config: AnnotatorConfig, gateway: LlmGateway | None = None):
    if config.mode == "rule":
        return RuleAnnotator(config.schema, config.lexicon, config.catalog)
    if gateway is None:
        raise ValueError("llm mode requires a gateway")
    return LlmAnnotator(config, gateway)


def annotate_utterance(
    utterance: Utterance,
    context: Sequence[Utterance],
    config: AnnotatorConfig,
    gateway: LlmGateway | None = None,
) -> tuple[DialogueAct, ...]:
    """Annotate one utterance given its preceding context."""
    return build_annotator(config, gateway).annotate(utterance, context)


def annotate_corpus(
    corpus: Corpus,
    config: AnnotatorConfig,
    gateway: LlmGateway | None = None,
    overwrite: bool = False,
    jobs: int = 1,
) -> Corpus:
    """Annotate every utterance of a corpus.

    Existing acts are kept unless ``overwrite`` is set. Utterances may be
    annotated concurrently (``jobs``); results merge by (dialogue_id, index)
    so the output never depends on scheduling. Per-utterance failures are
    aggregated into one AnnotationBatchError.
    """
    annotator = build_annotator(config, gateway)
    tasks: list[tuple[str, int]] = []
    for dialogue in corpus.dialogues:
        for utterance in dialogue.utterances:
            if utterance.acts and not overwrite:
                continue
            tasks.append((dialogue.dialogue_id, utterance.index))

    by_id = {d.dialogue_id: d for d in corpus.dialogues}

    def run_one(task: tuple[str, int]):
        dialogue_id, index = task
        dialogue = by_id[dialogue_id]
        utterance = dialogue.utterances[index]
        return task, annotator.annotate(utterance, dialogue.utterances[:index])

    results: dict[tuple[str, int], tuple[DialogueAct, ...]] = {}
    failures: list[str] = []
    if jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = []
            for task in tasks:
                outcomes.append(pool.submit(run_one, task))
            for task, future in zip(tasks, outcomes):
                try:
                    key, acts = future.result()
                    results[key] = acts
                except AnnotationError as exc:
                    failures.append(f"{task[0]}[{task[1]}]: {exc}")
    else:
        for task in tasks:
            try:
                key, acts = run_one(task)
                results[key] = acts
            except AnnotationError as exc:
                failures.append(f"{task[0]}[{task[1]}]: {exc}")

    if failures:
        raise AnnotationBatchError(sorted(failures))

    new_dialogues = []
    for dialogue in corpus.dialogues:
        new_utterances = []
        changed = False
        for utterance in dialogue.utterances:
            key = (dialogue.dialogue_id, utterance.index)
            if key in results:
                new_utterances.append(replace(utterance, acts=results[key]))
                changed = True
            else:
                new_utterances.append(utterance)
        if changed:
            new_dialogues.append(replace(dialogue, utterances=tuple(new_utterances)))
        else:
            new_dialogues.append(dialogue)
    return Corpus(
        dialogues=tuple(new_dialogues),
        schema_version=corpus.schema_version,
        extra=corpus.extra,
    )


def _roc_auc(instances: list[tuple[bool, float]]) -> float | None:
    """Rank-based AUC with average ranks for ties; None when one class only."""
    positives = sum(1 for label, _ in instances if label)
    negatives = len(instances) - positives
    if positives == 0 or negatives == 0:
        return None
    ordered = sorted(instances, key=lambda pair: pair[1])
    ranks: dict[int, float] = {}
    i = 0
    while i < len(ordered):
        j = i
        while j + 1 < len(ordered) and ordered[j + 1][1] == ordered[i][1]:
            j += 1
        average_rank = (i + j) / 2 + 1  # ranks are 1-based
        for k in range(i, j + 1):
            ranks[k] = average_rank
        i = j + 1
    positive_rank_sum = sum(
        ranks[k] for k, (label, _) in enumerate(ordered) if label
    )
    return (positive_rank_sum - positives * (positives + 1) / 2) / (
        positives * negatives
    )


def _check_aligned(predicted: Corpus, gold: Corpus) -> None:
    predicted_ids = {d.dialogue_id for d in predicted.dialogues}
    gold_ids = {d.dialogue_id for d in gold.dialogues}
    if predicted_ids != gold_ids:
        raise AlignmentError(
            f"corpora cover different dialogues: "
            f"{sorted(predicted_ids ^ gold_ids)[:5]} ..."
        )
    gold_by_id = {d.dialogue_id: d for d in gold.dialogues}
    for dialogue in predicted.dialogues:
        other = gold_by_id[dialogue.dialogue_id]
        if len(dialogue.utterances) != len(other.utterances):
            raise AlignmentError(
                f"dialogue {dialogue.dialogue_id}: utterance counts differ"
            )
        for mine, theirs in zip(dialogue.utterances, other.utterances):
            if mine.speaker is not theirs.speaker:
                raise AlignmentError(
                    f"dialogue {dialogue.dialogue_id}[{mine.index}]: speakers differ"
                )


def evaluate_annotator(
    predicted: Corpus,
    gold: Corpus,
    confidences: Mapping[tuple[str, int, str], float] | None = None,
) -> AnnotationQuality:
    """Score predicted acts against gold at the intent level.

    Slot values are ignored. ``confidences`` optionally maps
    (dialogue_id, index, intent) to a score; binary act presence is used
    otherwise.
    """
    _check_aligned(predicted, gold)
    gold_by_id = {d.dialogue_id: d for d in gold.dialogues}

    tp: dict[str, int] = {}
    fp: dict[str, int] = {}
    fn: dict[str, int] = {}
    role_instances: dict[Speaker, list[tuple[bool, float]]] = {
        Speaker.USER: [],
        Speaker.SYSTEM: [],
    }
    role_labels: dict[Speaker, set[str]] = {Speaker.USER: set(), Speaker.SYSTEM: set()}
    pairs = []
    for dialogue in predicted.dialogues:
        gold_dialogue = gold_by_id[dialogue.dialogue_id]
        for mine, theirs in zip(dialogue.utterances, gold_dialogue.utterances):
            pairs.append((dialogue.dialogue_id, mine, theirs))
            role_labels[mine.speaker].update(mine.intents())
            role_labels[mine.speaker].update(theirs.intents())

    for dialogue_id, mine, theirs in pairs:
        predicted_intents = set(mine.intents())
        gold_intents = set(theirs.intents())
        for intent in predicted_intents | gold_intents:
            if intent in predicted_intents and intent in gold_intents:
                tp[intent] = tp.get(intent, 0) + 1
            elif intent in predicted_intents:
                fp[intent] = fp.get(intent, 0) + 1
            else:
                fn[intent] = fn.get(intent, 0) + 1
        for intent in sorted(role_labels[mine.speaker]):
            if confidences is not None and (dialogue_id, mine.index, intent) in confidences:
                score = confidences[(dialogue_id, mine.index, intent)]
            else:
                score = 1.0 if intent in predicted_intents else 0.0
            role_instances[mine.speaker].append((intent in gold_intents, score))

    precision = {
        intent: tp.get(intent, 0) / (tp.get(intent, 0) + fp.get(intent, 0))
        for intent in set(tp) | set(fp)
        if tp.get(intent, 0) + fp.get(intent, 0) > 0
    }
    recall = {
        intent: tp.get(intent, 0) / (tp.get(intent, 0) + fn.get(intent, 0))
        for intent in set(tp) | set(fn)
        if tp.get(intent, 0) + fn.get(intent, 0) > 0
    }
    return AnnotationQuality(
        per_intent_precision=precision,
        per_intent_recall=recall,
        auc_user=_roc_auc(role_instances[Speaker.USER]),
        auc_system=_roc_auc(role_instances[Speaker.SYSTEM]),
    )
