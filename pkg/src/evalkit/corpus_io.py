"""Corpus parsing, serialization, and corpus-level scores.

The on-disk format is newline-delimited JSON (UTF-8): a leading header
record carrying ``schema_version`` (plus any corpus-level metadata),
followed by one self-contained dialogue record per line. Unknown keys at
every level are preserved as opaque metadata, so
``parse_corpus(serialize_corpus(c)) == c`` for any valid corpus.
"""

from __future__ import annotations

import json
from typing import Any, BinaryIO, Mapping

from .dialogue import (
    Corpus,
    Dialogue,
    DialogueAct,
    IntentSchema,
    Speaker,
    UserGoal,
    Utterance,
    default_schema,
)
from .errors import CorpusFormatError, SchemaViolationError

_DIALOGUE_KEYS = {
    "dialogue_id",
    "crs_id",
    "provenance",
    "satisfaction",
    "simulator_id",
    "goal",
    "utterances",
}
_UTTERANCE_KEYS = {"index", "speaker", "text", "acts", "items"}
_ACT_KEYS = {"intent", "slots"}
_GOAL_KEYS = {"constraints", "requests"}


def _extras(record: Mapping[str, Any], known: set[str]) -> dict[str, Any]:
    return {k: v for k, v in record.items() if k not in known}


def _parse_act(record: Mapping[str, Any]) -> DialogueAct:
    slots = tuple(
        (pair["slot"], pair["value"]) for pair in record.get("slots", ())
    )
    return DialogueAct(
        intent=record["intent"],
        slots=slots,
        extra=_extras(record, _ACT_KEYS),
    )


def _parse_goal(record: Mapping[str, Any]) -> UserGoal:
    constraints = tuple(
        (pair["slot"], pair["value"]) for pair in record.get("constraints", ())
    )
    return UserGoal(
        constraints=constraints,
        requests=tuple(record.get("requests", ())),
        extra=_extras(record, _GOAL_KEYS),
    )


def _parse_utterance(record: Mapping[str, Any], schema: IntentSchema) -> Utterance:
    speaker = Speaker(record["speaker"])
    acts = tuple(_parse_act(a) for a in record.get("acts", ()))
    for act in acts:
        schema.validate_act(act, speaker)
    return Utterance(
        index=record["index"],
        speaker=speaker,
        text=record.get("text", ""),
        acts=acts,
        items=tuple(record.get("items", ())),
        extra=_extras(record, _UTTERANCE_KEYS),
    )


def _parse_dialogue(record: Mapping[str, Any], schema: IntentSchema) -> Dialogue:
    goal = _parse_goal(record["goal"]) if record.get("goal") is not None else None
    utterances = tuple(
        _parse_utterance(u, schema) for u in record.get("utterances", ())
    )
    return Dialogue(
        dialogue_id=record["dialogue_id"],
        crs_id=record["crs_id"],
        utterances=utterances,
        satisfaction=record.get("satisfaction"),
        goal=goal,
        provenance=record.get("provenance", "human"),
        simulator_id=record.get("simulator_id"),
        extra=_extras(record, _DIALOGUE_KEYS),
    )


def parse_corpus(raw: bytes | str | BinaryIO, schema: IntentSchema | None = None) -> Corpus:
    """Parse a newline-delimited corpus stream.

    ``raw`` may be bytes, text, or a binary file object. Every record is
    validated against ``schema`` (the default schema when omitted); errors
    carry the 1-based line number of the offending record. An empty stream
    yields an empty corpus with the default schema version.
    """
    if schema is None:
        schema = default_schema()
    if isinstance(raw, bytes):
        text = raw.decode("utf-8")
    elif isinstance(raw, str):
        text = raw
    else:
        data = raw.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data

    schema_version = "1"
    header_extra: dict[str, Any] = {}
    dialogues: list[Dialogue] = []
    seen_ids: set[str] = set()
    header_seen = False

    for line_number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(line_number, f"invalid JSON ({exc.msg})") from exc
        if not isinstance(record, dict):
            raise CorpusFormatError(line_number, "record must be a JSON object")

        if not header_seen:
            if "schema_version" not in record:
                raise CorpusFormatError(
                    line_number, "first record must be a header with schema_version"
                )
            schema_version = str(record["schema_version"])
            header_extra = _extras(record, {"schema_version"})
            header_seen = True
            continue

        try:
            dialogue = _parse_dialogue(record, schema)
        except SchemaViolationError as exc:
            raise CorpusFormatError(line_number, str(exc)) from exc
        except (KeyError, TypeError, ValueError) as exc:
            detail = str(exc) or exc.__class__.__name__
            if isinstance(exc, KeyError):
                detail = f"missing required field {detail}"
            raise CorpusFormatError(line_number, detail) from exc
        if dialogue.dialogue_id in seen_ids:
            raise CorpusFormatError(
                line_number, f"duplicate dialogue_id {dialogue.dialogue_id!r}"
            )
        seen_ids.add(dialogue.dialogue_id)
        dialogues.append(dialogue)

    return Corpus(
        dialogues=tuple(dialogues),
        schema_version=schema_version,
        extra=header_extra,
    )


def _act_record(act: DialogueAct) -> dict[str, Any]:
    record: dict[str, Any] = {"intent": act.intent}
    if act.slots:
        record["slots"] = [{"slot": n, "value": v} for n, v in act.slots]
    record.update(act.extra)
    return record


def _goal_record(goal: UserGoal) -> dict[str, Any]:
    record: dict[str, Any] = {
        "constraints": [{"slot": n, "value": v} for n, v in goal.constraints],
        "requests": list(goal.requests),
    }
    record.update(goal.extra)
    return record


def _utterance_record(utterance: Utterance) -> dict[str, Any]:
    record: dict[str, Any] = {
        "index": utterance.index,
        "speaker": utterance.speaker.value,
        "text": utterance.text,
        "acts": [_act_record(a) for a in utterance.acts],
        "items": list(utterance.items),
    }
    record.update(utterance.extra)
    return record


def dialogue_record(dialogue: Dialogue) -> dict[str, Any]:
    """The JSON-ready record for one dialogue; optional fields are omitted."""
    record: dict[str, Any] = {
        "dialogue_id": dialogue.dialogue_id,
        "crs_id": dialogue.crs_id,
        "provenance": dialogue.provenance,
    }
    if dialogue.satisfaction is not None:
        record["satisfaction"] = dialogue.satisfaction
    if dialogue.simulator_id is not None:
        record["simulator_id"] = dialogue.simulator_id
    if dialogue.goal is not None:
        record["goal"] = _goal_record(dialogue.goal)
    record["utterances"] = [_utterance_record(u) for u in dialogue.utterances]
    record.update(dialogue.extra)
    return record


def serialize_corpus(corpus: Corpus) -> bytes:
    """Serialize ``corpus`` to UTF-8 newline-delimited JSON.

    Output is deterministic for a given corpus, so equal corpora always
    produce byte-identical streams.
    """
    lines = []
    header: dict[str, Any] = {"schema_version": corpus.schema_version}
    header.update(corpus.extra)
    lines.append(json.dumps(header, ensure_ascii=False, separators=(",", ":")))
    for dialogue in corpus.dialogues:
        lines.append(
            json.dumps(
                dialogue_record(dialogue), ensure_ascii=False, separators=(",", ":")
            )
        )
    return ("\n".join(lines) + "\n").encode("utf-8")


def write_corpus(corpus: Corpus, path) -> None:
    with open(path, "wb") as handle:
        handle.write(serialize_corpus(corpus))


def read_corpus(path, schema: IntentSchema | None = None) -> Corpus:
    with open(path, "rb") as handle:
        return parse_corpus(handle, schema)


def satisfaction_score(corpus: Corpus, crs_id: str) -> float:
    """Fraction of a system's labeled dialogues marked satisfied.

    Unlabeled dialogues (e.g. simulated ones) are excluded from the
    denominator. Raises ValueError when the system has no labeled dialogues.
    """
    labeled = [
        d for d in corpus.dialogues if d.crs_id == crs_id and d.satisfaction is not None
    ]
    if not labeled:
        raise ValueError(f"no labeled dialogues for crs_id {crs_id!r}")
    satisfied = sum(1 for d in labeled if d.satisfaction == "satisfied")
    return satisfied / len(labeled)
