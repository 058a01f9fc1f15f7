"""Chat providers for the reasoning and memory agents.

Every provider returns a :class:`Completion` or raises :class:`TransportError`.
The scripted provider is deterministic and keeps a transcript of every prompt
it was sent, which the tests treat as ground truth for what the engine did.
"""

from __future__ import annotations

import logging
import os
import threading
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import httpx

from .core import Message, estimate_tokens

logger = logging.getLogger(__name__)


class TransportError(Exception):
    def __init__(self, status: int | None, body: str = "") -> None:
        self.status = status
        self.body = body
        super().__init__(f"transport error (status={status}): {body[:200]}")


class MalformedResponse(Exception):
    pass


@dataclass(frozen=True)
class CompletionParams:
    temperature: float = 0.0
    max_output_tokens: int = 1024


@dataclass(frozen=True)
class Completion:
    text: str
    prompt_tokens: int
    output_tokens: int


class ChatProvider(Protocol):
    def complete(
        self, messages: Sequence[Message], params: CompletionParams | None = None
    ) -> Completion: ...


def render_prompt(messages: Sequence[Message]) -> str:
    return "\n".join(f"{m.role.value}: {m.content}" for m in messages)


Responder = Callable[[str], str]


@dataclass(frozen=True)
class Rule:
    """``pattern`` matches as a substring, or the whole prompt if ``exact``.

    ``response`` may be a callable of the rendered prompt; it may raise
    :class:`TransportError` to simulate a failing backend.
    """

    pattern: str
    response: str | Responder
    exact: bool = False

    def matches(self, prompt: str) -> bool:
        return prompt == self.pattern if self.exact else self.pattern in prompt


@dataclass(frozen=True)
class TranscriptEntry:
    prompt: str
    response: str


@dataclass
class ScriptedProvider:
    rules: list[Rule] = field(default_factory=list)
    default_response: str | Responder = ""
    transcript: list[TranscriptEntry] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._lock = threading.Lock()

    @property
    def calls(self) -> int:
        return len(self.transcript)

    def add_rule(self, pattern: str, response: str | Responder, exact: bool = False) -> None:
        self.rules.append(Rule(pattern, response, exact))

    def complete(
        self, messages: Sequence[Message], params: CompletionParams | None = None
    ) -> Completion:
        prompt = render_prompt(messages)
        response = self.default_response
        for rule in self.rules:
            if rule.matches(prompt):
                response = rule.response
                break
        try:
            text = response(prompt) if callable(response) else response
        except TransportError:
            with self._lock:
                self.transcript.append(TranscriptEntry(prompt, "<transport error>"))
            raise
        with self._lock:
            self.transcript.append(TranscriptEntry(prompt, text))
        return Completion(text, estimate_tokens(prompt), estimate_tokens(text))


def scripted_complete(
    provider: ScriptedProvider,
    messages: Sequence[Message],
    params: CompletionParams | None = None,
) -> Completion:
    return provider.complete(messages, params)


def http_complete(
    endpoint: str,
    api_key: str | None,
    model_name: str,
    messages: Sequence[Message | dict],
    params: CompletionParams | None = None,
    *,
    client: httpx.Client | None = None,
    timeout: float = 60.0,
) -> Completion:
    """POST one chat-completions request and parse the first choice."""
    params = params or CompletionParams()
    wire = [m.to_wire() if isinstance(m, Message) else dict(m) for m in messages]
    for m in wire:
        if m.get("role") not in ("user", "assistant", "system"):
            raise ValueError(f"role not allowed on the wire: {m.get('role')!r}")
    body = {
        "model": model_name,
        "messages": wire,
        "temperature": params.temperature,
        "max_tokens": params.max_output_tokens,
    }
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    url = endpoint.rstrip("/") + "/v1/chat/completions"
    owns = client is None
    client = client or httpx.Client(timeout=timeout)
    try:
        resp = client.post(url, json=body, headers=headers)
    except httpx.HTTPError as exc:
        raise TransportError(None, str(exc)) from exc
    finally:
        if owns:
            client.close()
    if not 200 <= resp.status_code < 300:
        raise TransportError(resp.status_code, resp.text[:500])
    try:
        data = resp.json()
        text = data["choices"][0]["message"]["content"]
        usage = data["usage"]
        prompt_tokens = int(usage["prompt_tokens"])
        output_tokens = int(usage["completion_tokens"])
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"unexpected completion body: {resp.text[:200]}") from exc
    if not isinstance(text, str) or prompt_tokens < 0 or output_tokens < 0:
        raise MalformedResponse("completion content or usage has the wrong type")
    return Completion(text, prompt_tokens, output_tokens)


class OpenAICompatibleProvider:
    """Provider backed by any server speaking the chat-completions protocol."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        api_key_env: str = "OPENAI_API_KEY",
        temperature: float = 0.0,
        max_output_tokens: int = 1024,
        client: httpx.Client | None = None,
    ) -> None:
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(api_key_env)
        self.params = CompletionParams(temperature, max_output_tokens)
        self._client = client

    def complete(
        self, messages: Sequence[Message], params: CompletionParams | None = None
    ) -> Completion:
        return http_complete(
            self.endpoint,
            self.api_key,
            self.model,
            messages,
            params or self.params,
            client=self._client,
        )
