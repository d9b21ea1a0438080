"""Independent brute-force metric evaluator.

Works directly on the serialized record stream with no code shared with
the metric engine: its own JSON walking, its own round scanner, its own
accept counting. Kept deliberately naive so it can serve as an oracle.
"""

from __future__ import annotations

import json


def _records(stream: bytes) -> list[dict]:
    lines = [line for line in stream.decode("utf-8").splitlines() if line.strip()]
    parsed = [json.loads(line) for line in lines]
    return [record for record in parsed if "dialogue_id" in record]


def _dialogue_success(utterances: list[dict]) -> float:
    for utterance in utterances:
        if utterance["speaker"] != "USER":
            continue
        for act in utterance.get("acts", []):
            if act["intent"] == "Accept":
                return 1.0
    return 0.0


def _dialogue_srrr(utterances: list[dict]) -> float:
    outcomes: list[bool] = []
    open_round = False
    for utterance in utterances:
        intents = [act["intent"] for act in utterance.get("acts", [])]
        if utterance["speaker"] == "SYSTEM" and "Recommend" in intents:
            open_round = True
        elif utterance["speaker"] == "USER" and open_round:
            decision = None
            for act in utterance.get("acts", []):
                if act["intent"] in ("Accept", "Reject"):
                    decision = act["intent"]
                    break
            if decision is not None:
                outcomes.append(decision == "Accept")
                open_round = False
    if open_round:
        outcomes.append(False)
    if not outcomes:
        return 0.0
    return sum(1 for outcome in outcomes if outcome) / len(outcomes)


def _dialogue_rdl(utterances: list[dict]) -> float:
    named: list[str] = []
    bare = 0
    for utterance in utterances:
        if utterance["speaker"] != "USER":
            continue
        for act in utterance.get("acts", []):
            if act["intent"] != "Accept":
                continue
            values = [
                pair["value"]
                for pair in act.get("slots", [])
                if pair["slot"] == "TITLE"
            ]
            if values:
                for value in values:
                    if value not in named:
                        named.append(value)
            else:
                bare += 1
    return (len(named) + bare) / len(utterances)


def oracle_reports(stream: bytes) -> dict[str, dict[str, float]]:
    """SR/SRRR/RDL per system, computed straight off the record stream."""
    per_system: dict[str, dict[str, list[float]]] = {}
    for record in _records(stream):
        utterances = record["utterances"]
        bucket = per_system.setdefault(
            record["crs_id"], {"SR": [], "SRRR": [], "RDL": []}
        )
        bucket["SR"].append(_dialogue_success(utterances))
        bucket["SRRR"].append(_dialogue_srrr(utterances))
        bucket["RDL"].append(_dialogue_rdl(utterances))
    return {
        metric: {
            crs_id: sum(values[metric]) / len(values[metric])
            for crs_id, values in per_system.items()
        }
        for metric in ("SR", "SRRR", "RDL")
    }


def oracle_recall(
    stream: bytes, ground_truth: dict[tuple[str, int], set[str]], n: int
) -> dict[str, float]:
    """Standard micro recall@n per system, straight off the record stream."""
    hits: dict[str, int] = {}
    truth: dict[str, int] = {}
    for record in _records(stream):
        crs_id = record["crs_id"]
        hits.setdefault(crs_id, 0)
        truth.setdefault(crs_id, 0)
        for utterance in record["utterances"]:
            if utterance["speaker"] != "SYSTEM":
                continue
            intents = [act["intent"] for act in utterance.get("acts", [])]
            recommended = list(utterance.get("items", []))
            if not recommended and "Recommend" in intents:
                for act in utterance.get("acts", []):
                    if act["intent"] == "Recommend":
                        recommended.extend(
                            pair["value"]
                            for pair in act.get("slots", [])
                            if pair["slot"] == "TITLE"
                        )
            if not recommended and "Recommend" not in intents:
                continue
            key = (record["dialogue_id"], utterance["index"])
            if key not in ground_truth:
                continue
            targets = ground_truth[key]
            hits[crs_id] += len(targets & set(recommended[:n]))
            truth[crs_id] += len(targets)
    return {
        crs_id: hits[crs_id] / truth[crs_id] if truth[crs_id] else 0.0
        for crs_id in hits
    }
