"""Boundary adapters: LLM chat-completion gateway and CRS endpoint clients.

Live adapters speak a minimal JSON-over-HTTP contract; mock and stub
counterparts are deterministic and side-effect-free so the whole test
suite runs without network access. Transports are injectable, which keeps
request-building logic testable against a recording fake.
"""

from __future__ import annotations

import itertools
import json
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Protocol, Sequence

import requests

from .errors import (
    ConnectorError,
    ConnectorTimeout,
    GatewayError,
    GatewayTimeout,
    ScriptExhaustedError,
)

Message = Mapping[str, str]
# A transport takes (url, json payload, headers) and returns the parsed
# JSON reply; injecting one keeps request-building logic testable.
Transport = Callable[[str, dict, dict], dict]


def bearer_headers(token: str | None) -> dict[str, str]:
    return {"Authorization": f"Bearer {token}"} if token else {}


@dataclass(frozen=True)
class GatewayOptions:
    """Connection settings for a chat-completion endpoint."""

    endpoint: str
    model: str
    temperature: float = 0.0
    streaming: bool = False
    timeout: float = 30.0
    max_retries: int = 2
    auth_token: str | None = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


def http_post_json(url: str, payload: dict, headers: dict, timeout: float) -> dict:
    """Default transport: POST a JSON payload, return the parsed JSON reply."""
    try:
        response = requests.post(url, json=payload, headers=headers, timeout=timeout)
    except requests.Timeout as exc:
        raise GatewayTimeout(f"request to {url} timed out after {timeout}s") from exc
    except requests.RequestException as exc:
        raise GatewayError(f"request to {url} failed: {exc}", transient=True) from exc
    if response.status_code >= 400:
        raise GatewayError(
            f"{url} answered status {response.status_code}: {response.text[:200]}",
            transient=response.status_code >= 500,
        )
    try:
        return response.json()
    except ValueError as exc:
        raise GatewayError(f"{url} returned non-JSON body") from exc


def _extract_text(body: Mapping[str, Any]) -> str:
    # Accept the common reply shapes: {"text": ...}, {"response": ...},
    # and chat-style {"message": {"content": ...}}.
    if "text" in body:
        return str(body["text"])
    if "response" in body:
        return str(body["response"])
    message = body.get("message")
    if isinstance(message, Mapping) and "content" in message:
        return str(message["content"])
    raise GatewayError(f"gateway reply has no text field: {json.dumps(body)[:200]}")


class LlmGateway(Protocol):
    def complete(self, messages: Sequence[Message]) -> str: ...


class HttpLlmGateway:
    """Chat-completion client for any endpoint speaking the wire contract.

    The request body carries the model id, the role-tagged message list,
    the temperature, and the stream flag. Transient failures are retried
    up to ``options.max_retries`` times.
    """

    def __init__(self, options: GatewayOptions, transport: Transport | None = None):
        self.options = options
        self._transport = transport or (
            lambda url, payload, headers: http_post_json(
                url, payload, headers, options.timeout
            )
        )

    def complete(self, messages: Sequence[Message]) -> str:
        payload = {
            "model": self.options.model,
            "messages": [dict(m) for m in messages],
            "temperature": self.options.temperature,
            "stream": self.options.streaming,
        }
        headers = bearer_headers(self.options.auth_token)
        last_error: GatewayError | None = None
        for attempt in range(self.options.max_retries + 1):
            try:
                body = self._transport(self.options.endpoint, payload, headers)
                return _extract_text(body)
            except GatewayError as exc:
                if not exc.transient:
                    raise
                last_error = exc
            if attempt < self.options.max_retries:
                time.sleep(0)  # retries are immediate; endpoints are local
        assert last_error is not None
        raise last_error


class MockLlmGateway:
    """Scripted gateway for offline tests.

    Replies are returned in order and the mock fails loudly when the script
    is exhausted. A ``responder`` callable may be supplied instead of a
    script for programmable fakes. Every call's messages are recorded in
    ``calls`` for prompt assertions.
    """

    def __init__(
        self,
        replies: Sequence[str] | None = None,
        responder: Callable[[Sequence[Message]], str] | None = None,
    ):
        if (replies is None) == (responder is None):
            raise ValueError("provide exactly one of replies or responder")
        self._replies = list(replies) if replies is not None else None
        self._responder = responder
        self._cursor = 0
        self._lock = threading.Lock()
        self.calls: list[list[dict]] = []

    def complete(self, messages: Sequence[Message]) -> str:
        with self._lock:
            self.calls.append([dict(m) for m in messages])
            if self._responder is None:
                assert self._replies is not None
                if self._cursor >= len(self._replies):
                    raise ScriptExhaustedError(
                        f"mock gateway script exhausted after "
                        f"{len(self._replies)} replies"
                    )
                reply = self._replies[self._cursor]
                self._cursor += 1
                return reply
        return self._responder(messages)


def llm_complete(
    messages: Sequence[Message],
    options: GatewayOptions,
    transport: Transport | None = None,
) -> str:
    """One-shot completion against ``options.endpoint``."""
    return HttpLlmGateway(options, transport=transport).complete(messages)


@dataclass(frozen=True)
class CrsEndpoint:
    """Wire description of one CRS: locator plus field-name mapping.

    The nine public CRSs this toolkit targets expose near-identical
    JSON-over-HTTP surfaces that differ only in field names, so adapters
    live in configuration rather than code.
    """

    crs_id: str
    endpoint: str
    session_mode: str = "body"  # "body" places the session id in the payload,
    # "header" sends it as X-Session-Id.
    request_fields: Mapping[str, str] = field(
        default_factory=lambda: {"session": "session_id", "text": "text"}
    )
    response_fields: Mapping[str, str] = field(
        default_factory=lambda: {"reply": "reply", "items": "items", "end": "end"}
    )
    timeout: float = 30.0
    auth_token: str | None = None

    def __post_init__(self):
        if not self.crs_id:
            raise ValueError("crs_id must be non-empty")
        if self.session_mode not in ("body", "header"):
            raise ValueError("session_mode must be 'body' or 'header'")


@dataclass(frozen=True)
class CrsReply:
    text: str
    items: tuple[str, ...] = ()
    end: bool = False


class CrsConnector(Protocol):
    crs_id: str

    def send(self, session: str, utterance: str, timeout: float | None = None) -> CrsReply: ...


class HttpCrsConnector:
    """Client for a live CRS endpoint using the configured field mapping."""

    def __init__(self, endpoint: CrsEndpoint, transport: Transport | None = None):
        self.endpoint = endpoint
        self.crs_id = endpoint.crs_id
        self._transport = transport

    def send(self, session: str, utterance: str, timeout: float | None = None) -> CrsReply:
        fields = self.endpoint.request_fields
        payload: dict[str, Any] = {fields["text"]: utterance}
        headers = bearer_headers(self.endpoint.auth_token)
        if self.endpoint.session_mode == "body":
            payload[fields["session"]] = session
        else:
            headers["X-Session-Id"] = session
        effective_timeout = timeout or self.endpoint.timeout
        try:
            if self._transport is not None:
                body = self._transport(self.endpoint.endpoint, payload, headers)
            else:
                body = self._post(payload, headers, effective_timeout)
        except (ConnectorError, GatewayError):
            raise
        except Exception as exc:  # connection refused, DNS, ...
            raise ConnectorError(f"CRS {self.crs_id}: {exc}") from exc
        return self._parse_reply(body)

    def _post(self, payload: dict, headers: dict, timeout: float) -> dict:
        try:
            response = requests.post(
                self.endpoint.endpoint, json=payload, headers=headers, timeout=timeout
            )
        except requests.Timeout as exc:
            raise ConnectorTimeout(
                f"CRS {self.crs_id} timed out after {timeout}s"
            ) from exc
        except requests.RequestException as exc:
            raise ConnectorError(f"CRS {self.crs_id}: {exc}") from exc
        if response.status_code >= 400:
            raise ConnectorError(
                f"CRS {self.crs_id} answered status {response.status_code}",
                raw_body=response.text,
            )
        try:
            return response.json()
        except ValueError as exc:
            raise ConnectorError(
                f"CRS {self.crs_id} returned a non-JSON body", raw_body=response.text
            ) from exc

    def _parse_reply(self, body: Mapping[str, Any]) -> CrsReply:
        fields = self.endpoint.response_fields
        if fields["reply"] not in body:
            raise ConnectorError(
                f"CRS {self.crs_id} reply lacks field {fields['reply']!r}",
                raw_body=json.dumps(body),
            )
        items = body.get(fields["items"], ())
        if not isinstance(items, (list, tuple)):
            raise ConnectorError(
                f"CRS {self.crs_id} item field is not a list",
                raw_body=json.dumps(body),
            )
        return CrsReply(
            text=str(body[fields["reply"]]),
            items=tuple(str(i) for i in items),
            end=bool(body.get(fields["end"], False)),
        )


def crs_send(
    endpoint: CrsEndpoint,
    session: str,
    utterance: str,
    transport: Transport | None = None,
) -> tuple[str, tuple[str, ...], bool]:
    """Send one user utterance to a CRS endpoint; returns (reply, items, end)."""
    reply = HttpCrsConnector(endpoint, transport=transport).send(session, utterance)
    return reply.text, reply.items, reply.end


class AlwaysRecommendStub:
    """Stub CRS that recommends the same item with the same sentence forever."""

    def __init__(self, item_id: str = "Midnight Run", crs_id: str | None = None):
        self.item_id = item_id
        self.crs_id = crs_id or "stub-always-recommend"

    def send(self, session: str, utterance: str, timeout: float | None = None) -> CrsReply:
        return CrsReply(
            text=f"Have you seen {self.item_id}?",
            items=(self.item_id,),
            end=False,
        )


class EchoStub:
    """Stub CRS that parrots the user's text back, recommending nothing."""

    def __init__(self, crs_id: str | None = None):
        self.crs_id = crs_id or "stub-echo"

    def send(self, session: str, utterance: str, timeout: float | None = None) -> CrsReply:
        return CrsReply(text=utterance, items=(), end=False)


class GoodbyeStub:
    """Stub CRS that ends the dialogue immediately."""

    def __init__(self, crs_id: str | None = None):
        self.crs_id = crs_id or "stub-goodbye"

    def send(self, session: str, utterance: str, timeout: float | None = None) -> CrsReply:
        return CrsReply(text="Goodbye!", items=(), end=True)


_STUBS = {
    "always-recommend": AlwaysRecommendStub,
    "echo": EchoStub,
    "goodbye": GoodbyeStub,
}


def make_stub(name: str, **kwargs) -> CrsConnector:
    """Build one of the bundled stub CRSs: always-recommend, echo, goodbye."""
    try:
        factory = _STUBS[name]
    except KeyError:
        raise ValueError(
            f"unknown stub {name!r}; available: {', '.join(sorted(_STUBS))}"
        ) from None
    return factory(**kwargs)


_session_counter = itertools.count(1)


def new_session_id(prefix: str = "session") -> str:
    """Process-local monotonically increasing session id."""
    return f"{prefix}-{next(_session_counter)}"
