"""Goal-conditioned user simulators and the conversation runner.

Two simulator families are provided. The agenda-based simulator plans
from a goal-derived action stack, reacts to recommendations and attribute
requests with deterministic rules, and otherwise samples its next intent
from a Markov interaction model keyed on the incoming system intent. The
LLM-backed simulator first decides whether the conversation still makes
progress (abort otherwise) and then generates its next utterance from the
goal and history.

All randomness flows from explicit seeds, so a fixed (seed, scripted
gateway, stub CRS) combination reproduces a conversation byte for byte.
"""

from __future__ import annotations

import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from importlib import resources
from typing import Callable, Mapping, Protocol, Sequence

from .annotation import RuleAnnotator, load_prompt_template
from .catalog import ItemCatalog
from .connectors import CrsConnector, LlmGateway
from .dialogue import (
    ACCEPT,
    BYE,
    Corpus,
    Dialogue,
    DialogueAct,
    DISCLOSE,
    INQUIRE,
    IntentSchema,
    OTHER,
    PROVENANCE_SIMULATED,
    RECOMMEND,
    REJECT,
    REQUEST,
    Speaker,
    UserGoal,
    Utterance,
    simulation_schema,
)
from .errors import (
    ConnectorError,
    ConnectorTimeout,
    GatewayError,
    SchemaViolationError,
    SimulationError,
)
from .metrics import ITEM_SLOT

REFINE = "Refine"

_START_ROW = "__start__"
_PROBABILITY_TOLERANCE = 1e-9


@dataclass(frozen=True)
class RunLimits:
    """Hard bounds on one simulated conversation."""

    max_utterances: int = 20
    max_consecutive_nonprogress: int = 3
    per_call_timeout: float = 30.0
    seed: int = 0

    def __post_init__(self):
        if self.max_utterances < 2:
            raise ValueError("max_utterances must be >= 2")
        if self.max_consecutive_nonprogress < 1:
            raise ValueError("max_consecutive_nonprogress must be >= 1")
        if self.per_call_timeout <= 0:
            raise ValueError("per_call_timeout must be positive")


@dataclass(frozen=True)
class Stop:
    """The simulator ends the conversation normally."""

    reason: str = "goal-fulfilled"


@dataclass(frozen=True)
class Abort:
    """The simulator gives up on the conversation."""

    reason: str


@dataclass(frozen=True)
class InteractionModel:
    """Markov transition table from system intents to user-intent distributions."""

    transitions: Mapping[str, Mapping[str, float]]
    initial: Mapping[str, float]
    source: str = "handcrafted"

    def __post_init__(self):
        if self.source not in ("handcrafted", "data-derived", "mixed"):
            raise ValueError(f"unknown interaction-model source {self.source!r}")
        for name, row in list(self.transitions.items()) + [(_START_ROW, self.initial)]:
            if any(p < 0 for p in row.values()):
                raise ValueError(f"row {name!r} has negative probabilities")
            total = sum(row.values())
            if abs(total - 1.0) > _PROBABILITY_TOLERANCE:
                raise ValueError(f"row {name!r} sums to {total!r}, expected 1")

    def row_for(self, system_intent: str | None) -> tuple[Mapping[str, float], bool]:
        """Distribution for an incoming intent; falls back to the initial row."""
        if system_intent is not None and system_intent in self.transitions:
            return self.transitions[system_intent], False
        return self.initial, system_intent is not None

    def validate_against(self, schema: IntentSchema) -> None:
        for name, row in self.transitions.items():
            if name not in schema.system_intents:
                raise SchemaViolationError(
                    f"interaction model row {name!r} is not a system intent"
                )
            for intent in row:
                if intent not in schema.user_intents:
                    raise SchemaViolationError(
                        f"interaction model references unknown user intent {intent!r}"
                    )
        for intent in self.initial:
            if intent not in schema.user_intents:
                raise SchemaViolationError(
                    f"initial distribution references unknown user intent {intent!r}"
                )


def load_interaction_model(
    source, schema: IntentSchema | None = None, model_source: str = "handcrafted"
) -> InteractionModel:
    """Load a tab-separated probability table.

    The header names the user-intent columns; each following row is a
    system intent (or ``__start__`` for the opening distribution) followed
    by one probability per column.
    """
    if isinstance(source, str) and "\t" in source:
        text = source
    else:
        with open(source, "r", encoding="utf-8") as handle:
            text = handle.read()
    lines = [
        line for line in text.splitlines() if line.strip() and not line.startswith("#")
    ]
    if not lines:
        raise ValueError("interaction model file is empty")
    header = lines[0].split("\t")
    user_intents = [name.strip() for name in header[1:]]
    transitions: dict[str, dict[str, float]] = {}
    initial: dict[str, float] | None = None
    for line in lines[1:]:
        cells = line.split("\t")
        if len(cells) != len(user_intents) + 1:
            raise ValueError(f"row {cells[0]!r} has {len(cells) - 1} probabilities, "
                             f"expected {len(user_intents)}")
        name = cells[0].strip()
        row = {
            intent: float(cell) for intent, cell in zip(user_intents, cells[1:])
        }
        if name == _START_ROW:
            initial = row
        else:
            transitions[name] = row
    if initial is None:
        raise ValueError(f"interaction model needs a {_START_ROW} row")
    model = InteractionModel(
        transitions=transitions, initial=initial, source=model_source
    )
    if schema is not None:
        model.validate_against(schema)
    return model


def default_interaction_model(schema: IntentSchema | None = None) -> InteractionModel:
    text = (
        resources.files("evalkit")
        .joinpath("data/interaction_model.tsv")
        .read_text("utf-8")
    )
    return load_interaction_model(text, schema=schema)


@dataclass(frozen=True)
class GoalConfig:
    """What goals may be sampled from a catalog."""

    constraint_slots: tuple[str, ...]
    request_slots: tuple[str, ...] = ()
    min_constraints: int = 1
    max_constraints: int = 2
    min_requests: int = 1
    max_requests: int = 3
    max_attempts: int = 50

    def __post_init__(self):
        object.__setattr__(self, "constraint_slots", tuple(self.constraint_slots))
        object.__setattr__(self, "request_slots", tuple(self.request_slots))
        if not self.constraint_slots:
            raise ValueError("goal config needs at least one constraint slot")
        if not 1 <= self.min_constraints <= self.max_constraints:
            raise ValueError("constraint counts must satisfy 1 <= min <= max")
        if not 0 <= self.min_requests <= self.max_requests:
            raise ValueError("request counts must satisfy 0 <= min <= max")


def sample_goal(
    catalog: ItemCatalog, config: GoalConfig, seed: int | random.Random
) -> UserGoal:
    """Draw a satisfiable goal: constraints anchored to one catalog item.

    Deterministic for a fixed integer seed. Constraint values are taken
    from a single randomly chosen item, so at least that item matches all
    of them. Raises ValueError when a configured slot is absent from the
    catalog, SimulationError when no satisfiable combination is found
    within the attempt budget.
    """
    rng = seed if isinstance(seed, random.Random) else random.Random(seed)
    catalog_slots = set(catalog.slots())
    for slot in config.constraint_slots + config.request_slots:
        if slot not in catalog_slots:
            raise ValueError(f"slot {slot!r} is not present in the catalog")

    for _ in range(config.max_attempts):
        count = rng.randint(config.min_constraints, config.max_constraints)
        anchor = catalog.items[rng.randrange(len(catalog))]
        populated = [s for s in config.constraint_slots if anchor.values(s)]
        if len(populated) < count:
            continue
        chosen = rng.sample(populated, count)
        constraints = tuple(
            (slot, rng.choice(anchor.values(slot))) for slot in chosen
        )
        if not catalog.matching(constraints):
            continue
        request_cap = min(config.max_requests, len(config.request_slots))
        request_floor = min(config.min_requests, request_cap)
        request_count = rng.randint(request_floor, request_cap) if request_cap else 0
        requests = (
            tuple(rng.sample(list(config.request_slots), request_count))
            if request_count
            else ()
        )
        return UserGoal(constraints=constraints, requests=requests)
    raise SimulationError(
        f"no satisfiable goal found after {config.max_attempts} attempts"
    )


@dataclass(frozen=True)
class SimulatorAgenda:
    """Immutable agenda state: pending actions plus goal progress."""

    stack: tuple[DialogueAct, ...]
    goal: UserGoal
    fulfilled_constraints: frozenset[tuple[str, str]] = frozenset()
    fulfilled_requests: frozenset[str] = frozenset()
    accepted_items: tuple[str, ...] = ()
    open_items: tuple[str, ...] = ()
    pending_request: str | None = None
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.fulfilled_constraints <= set(self.goal.constraints):
            raise ValueError("fulfilled constraints must be a subset of the goal's")
        if not self.fulfilled_requests <= set(self.goal.requests):
            raise ValueError("fulfilled requests must be a subset of the goal's")

    def goal_fulfilled(self) -> bool:
        return (
            set(self.goal.constraints) <= self.fulfilled_constraints
            and set(self.goal.requests) <= self.fulfilled_requests
            and bool(self.accepted_items)
        )


def new_agenda(goal: UserGoal) -> SimulatorAgenda:
    """Seed the agenda stack: disclose each constraint, then ask each request."""
    stack = tuple(
        DialogueAct(DISCLOSE, ((slot, value),)) for slot, value in goal.constraints
    ) + tuple(DialogueAct(INQUIRE, ((attr, ""),)) for attr in goal.requests)
    return SimulatorAgenda(stack=stack, goal=goal)


def render_act_text(act: DialogueAct) -> str:
    """Offline template realization of a user act."""
    titles = act.slot_values(ITEM_SLOT)
    if act.intent == DISCLOSE and act.slots:
        slot, value = act.slots[0]
        return f"I'm looking for something with {slot} {value}."
    if act.intent == REFINE and act.slots:
        slot, value = act.slots[0]
        return f"Preferably {slot} {value}."
    if act.intent == INQUIRE:
        if act.slots and act.slots[0][0]:
            return f"What about the {act.slots[0][0]}?"
        return "Tell me more, please."
    if act.intent == ACCEPT:
        if titles:
            return f"Great, I'll watch {titles[0]}. Thanks!"
        return "Great, I'll take it. Thanks!"
    if act.intent == REJECT:
        if titles:
            return f"No, {titles[0]} doesn't work for me. Anything else?"
        return "No, that doesn't work for me. Anything else?"
    if act.intent == BYE:
        return "Thanks, goodbye!"
    return "Okay."


def _is_stale(act: DialogueAct, agenda: SimulatorAgenda) -> bool:
    if act.intent == DISCLOSE and act.slots:
        return act.slots[0] in agenda.fulfilled_constraints
    if act.intent == INQUIRE and act.slots and act.slots[0][0]:
        return act.slots[0][0] in agenda.fulfilled_requests
    return False


def _matching_item(
    goal: UserGoal,
    open_items,
    accepted_items,
    catalog: ItemCatalog | None,
) -> str | None:
    """First open item that satisfies the goal and was not accepted before."""
    if catalog is None:
        return None
    accepted = set(accepted_items)
    for item_id in open_items:
        if item_id in accepted:
            continue
        item = catalog.get(item_id)
        if item is not None and item.satisfies_all(goal.constraints):
            return item_id
    return None


def _any_satisfying(items, goal: UserGoal, catalog: ItemCatalog | None) -> bool:
    if catalog is None:
        return False
    for item_id in items:
        item = catalog.get(item_id)
        if item is not None and item.satisfies_all(goal.constraints):
            return True
    return False


def _instantiable(intent: str, agenda: SimulatorAgenda, catalog: ItemCatalog | None) -> bool:
    if intent == ACCEPT:
        return (
            _matching_item(agenda.goal, agenda.open_items, agenda.accepted_items, catalog)
            is not None
        )
    if intent == REJECT:
        return bool(agenda.open_items)
    return True


def _sample_intent(
    row: Mapping[str, float],
    agenda: SimulatorAgenda,
    catalog: ItemCatalog | None,
    rng: random.Random,
) -> str | None:
    candidates = [
        (intent, probability)
        for intent, probability in sorted(row.items())
        if probability > 0 and _instantiable(intent, agenda, catalog)
    ]
    if not candidates:
        return None
    total = sum(p for _, p in candidates)
    roll = rng.random() * total
    cumulative = 0.0
    for intent, probability in candidates:
        cumulative += probability
        if roll < cumulative:
            return intent
    return candidates[-1][0]


def _instantiate(
    intent: str,
    agenda: SimulatorAgenda,
    catalog: ItemCatalog | None,
    rng: random.Random,
) -> DialogueAct:
    goal = agenda.goal
    if intent == DISCLOSE:
        undisclosed = [
            c for c in goal.constraints if c not in agenda.fulfilled_constraints
        ]
        slot, value = undisclosed[0] if undisclosed else rng.choice(goal.constraints)
        return DialogueAct(DISCLOSE, ((slot, value),))
    if intent == REFINE:
        slot, value = rng.choice(goal.constraints)
        return DialogueAct(REFINE, ((slot, value),))
    if intent == INQUIRE:
        unanswered = [r for r in goal.requests if r not in agenda.fulfilled_requests]
        if unanswered:
            return DialogueAct(INQUIRE, ((unanswered[0], ""),))
        return DialogueAct(INQUIRE)
    if intent == ACCEPT:
        item = _matching_item(goal, agenda.open_items, agenda.accepted_items, catalog)
        assert item is not None
        return DialogueAct(ACCEPT, ((ITEM_SLOT, item),))
    if intent == REJECT:
        return DialogueAct(REJECT, ((ITEM_SLOT, agenda.open_items[0]),))
    return DialogueAct(intent)


def abus_next(
    agenda: SimulatorAgenda,
    model: InteractionModel,
    incoming: Utterance | None,
    annotator: RuleAnnotator,
    rng: random.Random,
    catalog: ItemCatalog | None = None,
    nlg: Callable[[DialogueAct], str] | None = None,
) -> tuple[SimulatorAgenda, Utterance | Stop]:
    """Advance the agenda simulator by one turn.

    Interprets the incoming system utterance (annotating it first when it
    carries no acts), pushes deterministic goal reactions onto the stack,
    then pops the next planned action or samples one from the interaction
    model row for the incoming intent. Returns Stop when the goal is
    fulfilled or a terminal Bye is drawn.
    """
    if agenda.goal_fulfilled():
        return agenda, Stop("goal-fulfilled")

    stack = list(agenda.stack)
    fulfilled_constraints = set(agenda.fulfilled_constraints)
    fulfilled_requests = set(agenda.fulfilled_requests)
    open_items = list(agenda.open_items)
    warnings = list(agenda.warnings)
    pending = agenda.pending_request
    system_intent: str | None = None

    if incoming is not None:
        acts = incoming.acts or annotator.annotate(incoming)
        system_intent = acts[0].intent if acts else OTHER
        if pending is not None:
            # Any system reply to our attribute question counts as an answer.
            if pending in set(agenda.goal.requests):
                fulfilled_requests.add(pending)
            pending = None

        recommended: list[str] = []
        requested_slots: list[str] = []
        for act in acts:
            if act.intent == RECOMMEND:
                recommended.extend(act.slot_values(ITEM_SLOT))
            elif act.intent == REQUEST:
                requested_slots.extend(name for name, _ in act.slots)
        for item in incoming.items:
            if item not in recommended:
                recommended.append(item)

        if recommended:
            open_items = recommended
            match = _matching_item(
                agenda.goal, recommended, agenda.accepted_items, catalog
            )
            if match is not None:
                stack.insert(0, DialogueAct(ACCEPT, ((ITEM_SLOT, match),)))
            elif not _any_satisfying(recommended, agenda.goal, catalog):
                stack.insert(0, DialogueAct(REJECT, ((ITEM_SLOT, recommended[0]),)))
            # A repeat of an already-accepted item draws no new decision;
            # the planned agenda (inquiries, further disclosures) continues.
        constraint_map = dict(agenda.goal.constraints)
        for slot in requested_slots:
            if slot in constraint_map:
                stack.insert(0, DialogueAct(DISCLOSE, ((slot, constraint_map[slot]),)))

    interim = SimulatorAgenda(
        stack=tuple(stack),
        goal=agenda.goal,
        fulfilled_constraints=frozenset(fulfilled_constraints),
        fulfilled_requests=frozenset(fulfilled_requests),
        accepted_items=agenda.accepted_items,
        open_items=tuple(open_items),
        pending_request=pending,
        warnings=tuple(warnings),
    )

    act: DialogueAct | None = None
    while stack:
        candidate = stack.pop(0)
        if _is_stale(candidate, interim):
            continue
        act = candidate
        break

    if act is None:
        row, fell_back = model.row_for(system_intent)
        if fell_back:
            warnings.append(
                f"no transition row for system intent {system_intent!r}; "
                f"using the initial distribution"
            )
        intent = _sample_intent(row, interim, catalog, rng)
        if intent is None:
            intent = DISCLOSE
        act = _instantiate(intent, interim, catalog, rng)

    if act.intent == BYE:
        updated = replace(
            interim,
            stack=tuple(stack),
            pending_request=pending,
            warnings=tuple(warnings),
        )
        return updated, Stop("bye")

    accepted_items = list(agenda.accepted_items)
    if act.intent == ACCEPT:
        for title in act.slot_values(ITEM_SLOT):
            if title not in accepted_items:
                accepted_items.append(title)
        open_items = []
    elif act.intent == REJECT:
        open_items = []
    elif act.intent in (DISCLOSE, REFINE) and act.slots:
        if act.slots[0] in set(agenda.goal.constraints):
            fulfilled_constraints.add(act.slots[0])
    elif act.intent == INQUIRE and act.slots and act.slots[0][0]:
        if act.slots[0][0] in set(agenda.goal.requests):
            pending = act.slots[0][0]

    text = nlg(act) if nlg is not None else render_act_text(act)
    index = incoming.index + 1 if incoming is not None else 0
    items = act.slot_values(ITEM_SLOT) if act.intent in (ACCEPT, REJECT) else ()
    outgoing = Utterance(
        index=index, speaker=Speaker.USER, text=text, acts=(act,), items=items
    )
    updated = SimulatorAgenda(
        stack=tuple(stack),
        goal=agenda.goal,
        fulfilled_constraints=frozenset(fulfilled_constraints),
        fulfilled_requests=frozenset(fulfilled_requests),
        accepted_items=tuple(accepted_items),
        open_items=tuple(open_items),
        pending_request=pending,
        warnings=tuple(warnings),
    )
    return updated, outgoing


class SimulatorSession(Protocol):
    def next(self, incoming: Utterance | None) -> Utterance | Stop | Abort: ...


class UserSimulator(Protocol):
    simulator_id: str

    def start_session(self, goal: UserGoal, seed: int) -> SimulatorSession: ...


class _AbusSession:
    def __init__(self, simulator: "AgendaSimulator", goal: UserGoal, seed: int):
        self._simulator = simulator
        self.agenda = new_agenda(goal)
        self._rng = random.Random(seed)

    def next(self, incoming: Utterance | None) -> Utterance | Stop:
        self.agenda, outcome = abus_next(
            self.agenda,
            self._simulator.model,
            incoming,
            self._simulator.annotator,
            self._rng,
            catalog=self._simulator.catalog,
            nlg=self._simulator.nlg,
        )
        return outcome


class AgendaSimulator:
    """Agenda-based user simulator (interaction model + goal reactions)."""

    def __init__(
        self,
        catalog: ItemCatalog,
        schema: IntentSchema | None = None,
        model: InteractionModel | None = None,
        annotator: RuleAnnotator | None = None,
        nlg: Callable[[DialogueAct], str] | None = None,
        simulator_id: str = "abus",
    ):
        self.schema = schema or simulation_schema()
        self.model = model or default_interaction_model(self.schema)
        self.model.validate_against(self.schema)
        self.catalog = catalog
        self.annotator = annotator or RuleAnnotator(self.schema, catalog=catalog)
        self.nlg = nlg
        self.simulator_id = simulator_id

    def start_session(self, goal: UserGoal, seed: int) -> _AbusSession:
        return _AbusSession(self, goal, seed)


@dataclass(frozen=True)
class ConversationState:
    """What the LLM simulator knows: its goal and the turns so far."""

    goal: UserGoal
    history: tuple[tuple[str, str], ...] = ()


def _render_goal(goal: UserGoal) -> str:
    constraints = "; ".join(f"{slot} = {value}" for slot, value in goal.constraints)
    requests = ", ".join(goal.requests) if goal.requests else "(none)"
    return f"constraints: {constraints}. information to ask about: {requests}."


TRUNCATION_MARKER = "[earlier turns omitted]"


def _render_history(history: Sequence[tuple[str, str]], budget: int) -> str:
    if not history:
        return "(start of conversation)"
    lines = [f"{speaker}: {text}" for speaker, text in history]
    kept: list[str] = []
    used = 0
    for line in reversed(lines):
        if kept and used + len(line) + 1 > budget:
            break
        kept.append(line)
        used += len(line) + 1
    kept.reverse()
    if len(kept) < len(lines):
        kept.insert(0, TRUNCATION_MARKER)
    return "\n".join(kept)


def llmus_next(
    state: ConversationState,
    incoming: Utterance | None,
    gateway: LlmGateway,
    annotator: RuleAnnotator | None = None,
    max_prompt_chars: int = 4000,
) -> Utterance | Abort:
    """Advance the LLM simulator by one turn (at most two gateway calls).

    On a non-opening turn the simulator first decides continue-or-abort;
    if it continues (or is opening), it generates the next user utterance
    zero-shot from the goal and the (budget-truncated) history. An empty
    generation is retried once, then the turn aborts.
    """
    history = state.history
    if incoming is not None:
        history = history + ((incoming.speaker.value, incoming.text),)

    goal_text = _render_goal(state.goal)
    history_text = _render_history(history, max_prompt_chars)

    if incoming is not None:
        decision_prompt = load_prompt_template("simulator_continue").format(
            goal=goal_text, history=history_text
        )
        decision = gateway.complete([{"role": "user", "content": decision_prompt}])
        normalized = decision.strip().lower()
        if normalized.startswith("abort"):
            reason = decision.strip()[len("abort"):].lstrip(":. ").strip()
            return Abort(reason=reason or "no-progress")

    generate_prompt = load_prompt_template("simulator_generate").format(
        goal=goal_text, history=history_text
    )
    text = ""
    for _ in range(2):
        text = gateway.complete(
            [{"role": "user", "content": generate_prompt}]
        ).strip()
        if text:
            break
    if not text:
        return Abort(reason="generation-failure")

    acts = annotator.annotate(
        Utterance(index=0, speaker=Speaker.USER, text=text)
    ) if annotator is not None else ()
    items: tuple[str, ...] = ()
    for act in acts:
        if act.intent in (ACCEPT, REJECT):
            items = items + act.slot_values(ITEM_SLOT)
    index = incoming.index + 1 if incoming is not None else 0
    return Utterance(
        index=index, speaker=Speaker.USER, text=text, acts=tuple(acts), items=items
    )


class _LlmUsSession:
    def __init__(self, simulator: "LlmSimulator", goal: UserGoal, gateway: LlmGateway):
        self._simulator = simulator
        self._gateway = gateway
        self.state = ConversationState(goal=goal)

    def next(self, incoming: Utterance | None) -> Utterance | Abort:
        outcome = llmus_next(
            self.state,
            incoming,
            self._gateway,
            annotator=self._simulator.annotator,
            max_prompt_chars=self._simulator.max_prompt_chars,
        )
        new_history = self.state.history
        if incoming is not None:
            new_history = new_history + ((incoming.speaker.value, incoming.text),)
        if isinstance(outcome, Utterance):
            new_history = new_history + ((outcome.speaker.value, outcome.text),)
        self.state = replace(self.state, history=new_history)
        return outcome


class LlmSimulator:
    """LLM-backed user simulator with an explicit continue-or-abort step."""

    def __init__(
        self,
        gateway: LlmGateway | Callable[[], LlmGateway],
        annotator: RuleAnnotator | None = None,
        max_prompt_chars: int = 4000,
        simulator_id: str = "llm-us",
    ):
        self._gateway = gateway
        # Generated turns should carry acts; without a catalog the rule
        # annotator still tags decisions and disclosures from cue phrases.
        self.annotator = annotator or RuleAnnotator(simulation_schema())
        self.max_prompt_chars = max_prompt_chars
        self.simulator_id = simulator_id

    def start_session(self, goal: UserGoal, seed: int) -> _LlmUsSession:
        gateway = self._gateway() if callable(self._gateway) else self._gateway
        return _LlmUsSession(self, goal, gateway)


TERMINATION_REASON = "termination_reason"


def run_conversation(
    simulator: UserSimulator,
    connector: CrsConnector,
    goal: UserGoal,
    limits: RunLimits,
    dialogue_id: str | None = None,
    schema_version: str = "1",
) -> Dialogue:
    """Run one simulator-vs-CRS conversation.

    The simulator opens. The loop ends on simulator Stop/Abort, a CRS end
    signal, the utterance cap, a connector timeout, or the loop guard
    (too many consecutive identical CRS replies). The returned dialogue
    carries the goal, the simulator id, acts on simulator turns, and a
    termination reason; CRS turns are left for the annotation stage.
    """
    session = simulator.start_session(goal, limits.seed)
    session_id = f"{simulator.simulator_id}-{connector.crs_id}-{limits.seed}"
    utterances: list[Utterance] = []
    reason = "max-utterances"
    detail: str | None = None
    last_reply: str | None = None
    repeats = 0
    incoming: Utterance | None = None

    while len(utterances) < limits.max_utterances:
        outcome = session.next(incoming)
        if isinstance(outcome, Stop):
            reason = "simulator-stop"
            detail = outcome.reason
            break
        if isinstance(outcome, Abort):
            reason = "simulator-abort"
            detail = outcome.reason
            break
        utterances.append(replace(outcome, index=len(utterances)))
        if len(utterances) >= limits.max_utterances:
            reason = "max-utterances"
            break

        try:
            reply = connector.send(
                session_id, outcome.text, timeout=limits.per_call_timeout
            )
        except ConnectorTimeout as exc:
            reason = "connector-timeout"
            detail = str(exc)
            break
        except ConnectorError as exc:
            raise SimulationError(
                f"conversation {session_id}: connector failed: {exc}"
            ) from exc

        system_utterance = Utterance(
            index=len(utterances),
            speaker=Speaker.SYSTEM,
            text=reply.text,
            acts=(),
            items=reply.items,
        )
        utterances.append(system_utterance)
        if reply.end:
            reason = "crs-ended"
            break
        if reply.text == last_reply:
            repeats += 1
        else:
            repeats = 0
            last_reply = reply.text
        if repeats >= limits.max_consecutive_nonprogress:
            reason = "loop-guard"
            break
        if len(utterances) >= limits.max_utterances:
            reason = "max-utterances"
            break
        incoming = system_utterance

    if not utterances:
        raise SimulationError(
            f"conversation {session_id} produced no utterances "
            f"({reason}{': ' + detail if detail else ''})"
        )

    extra: dict = {"seed": limits.seed, TERMINATION_REASON: reason}
    if detail:
        extra["termination_detail"] = detail
    return Dialogue(
        dialogue_id=dialogue_id or session_id,
        crs_id=connector.crs_id,
        utterances=tuple(utterances),
        goal=goal,
        provenance=PROVENANCE_SIMULATED,
        simulator_id=simulator.simulator_id,
        extra=extra,
    )


def generate_corpus(
    simulator: UserSimulator,
    connector: CrsConnector,
    n: int,
    catalog: ItemCatalog,
    goal_config: GoalConfig | None = None,
    limits: RunLimits | None = None,
    seeds: Sequence[int] | None = None,
    schema_version: str = "1",
    jobs: int = 1,
) -> Corpus:
    """Generate ``n`` simulated dialogues with distinct seeds and goals.

    Per-dialogue failures are recorded in the corpus header metadata
    rather than aborting the batch; only a fully failed batch raises.
    Results are ordered by seed index, so the output is independent of
    the worker schedule.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    limits = limits or RunLimits()
    if seeds is None:
        seeds = [limits.seed + offset for offset in range(n)]
    seeds = list(seeds)
    if len(seeds) != n or len(set(seeds)) != n:
        raise ValueError(f"need {n} distinct seeds, got {seeds!r}")
    if goal_config is None:
        slots = catalog.slots()
        goal_config = GoalConfig(constraint_slots=slots, request_slots=slots)

    def run_one(seed: int) -> Dialogue:
        goal = sample_goal(catalog, goal_config, seed)
        run_limits = replace(limits, seed=seed)
        return run_conversation(
            simulator,
            connector,
            goal,
            run_limits,
            dialogue_id=f"{simulator.simulator_id}-{connector.crs_id}-{seed:08d}",
            schema_version=schema_version,
        )

    outcomes: list[Dialogue | Exception] = []
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_one, seed) for seed in seeds]
            for future in futures:
                try:
                    outcomes.append(future.result())
                except (SimulationError, ConnectorError, GatewayError) as exc:
                    outcomes.append(exc)
    else:
        for seed in seeds:
            try:
                outcomes.append(run_one(seed))
            except (SimulationError, ConnectorError, GatewayError) as exc:
                outcomes.append(exc)

    dialogues = [o for o in outcomes if isinstance(o, Dialogue)]
    failures = [
        {"seed": seed, "error": str(outcome)}
        for seed, outcome in zip(seeds, outcomes)
        if not isinstance(outcome, Dialogue)
    ]
    if not dialogues:
        raise SimulationError(
            f"all {n} simulation runs failed; first error: {failures[0]['error']}"
        )

    extra: dict = {
        "generator": {
            "simulator_id": simulator.simulator_id,
            "crs_id": connector.crs_id,
            "n": n,
            "base_seed": limits.seed,
        }
    }
    if failures:
        extra["failures"] = failures
    return Corpus(
        dialogues=tuple(dialogues), schema_version=schema_version, extra=extra
    )
