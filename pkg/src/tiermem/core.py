"""Shared vocabulary: messages, turn records, notes, token estimates and
the incremental dialogue hash chain used for prefix matching."""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

HASH_ALGORITHM = "sha256"
DIGEST_SIZE = 32

# Chain value for the empty dialogue; published so that snapshots can be checked.
SEED_DIGEST = hashlib.sha256(b"tiermem/dialogue-chain/v1").digest()

DEFAULT_WINDOW_TOKENS = 2048


class Role(str, enum.Enum):
    USER = "user"
    ASSISTANT = "assistant"


_ROLE_BYTE = {Role.USER: b"\x01", Role.ASSISTANT: b"\x02"}


@dataclass(frozen=True)
class Message:
    role: Role
    content: str

    def __post_init__(self) -> None:
        role = self.role
        if not isinstance(role, Role):
            try:
                role = Role(role)
            except ValueError:
                raise ValueError(f"unknown message role: {self.role!r}") from None
            object.__setattr__(self, "role", role)
        if not isinstance(self.content, str) or not self.content.strip():
            raise ValueError("message content must be non-empty")

    @classmethod
    def user(cls, content: str) -> "Message":
        return cls(Role.USER, content)

    @classmethod
    def assistant(cls, content: str) -> "Message":
        return cls(Role.ASSISTANT, content)

    def to_wire(self) -> dict:
        return {"role": self.role.value, "content": self.content}

    @classmethod
    def from_wire(cls, obj: dict) -> "Message":
        if not isinstance(obj, dict) or "role" not in obj or "content" not in obj:
            raise ValueError("message must be an object with role and content")
        return cls(obj["role"], obj["content"])


@dataclass(frozen=True)
class TurnRecord:
    """One completed exchange. ``summary`` stays empty until the memory
    pipeline for this turn has run."""

    turn_id: int
    user_input: str
    response: str
    turn_hash: bytes
    summary: str = ""
    prompt_tokens: int = 0
    output_tokens: int = 0
    created_at: int = 0
    summary_fallback: bool = False

    def __post_init__(self) -> None:
        if self.turn_id < 1:
            raise ValueError("turn_id must be positive")
        if self.prompt_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be non-negative")


class NoteStatus(str, enum.Enum):
    ACTIVE = "active"
    REVISED = "revised"
    RETIRED = "retired"


@dataclass(frozen=True)
class Note:
    note_id: str
    content: str
    status: NoteStatus = NoteStatus.ACTIVE
    source_turns: tuple[int, ...] = ()
    revision_of: str | None = None

    @property
    def active(self) -> bool:
        return self.status is NoteStatus.ACTIVE


@dataclass(frozen=True)
class TokenBudget:
    max_window_tokens: int = DEFAULT_WINDOW_TOKENS

    def __post_init__(self) -> None:
        if int(self.max_window_tokens) < 1:
            raise ValueError("max_window_tokens must be positive")


def estimate_tokens(text: str) -> int:
    """Four characters per token, rounded up."""
    return math.ceil(len(text) / 4)


def canonical(content: str) -> str:
    """Trim and collapse whitespace runs; case is preserved."""
    return " ".join(content.split())


def hash_chain(prev: bytes, message: Message) -> bytes:
    body = canonical(message.content).encode("utf-8")
    h = hashlib.sha256()
    h.update(prev)
    h.update(_ROLE_BYTE[message.role])
    h.update(len(body).to_bytes(8, "big"))
    h.update(body)
    return h.digest()


def chain_of(messages: Iterable[Message]) -> list[bytes]:
    """All prefix digests of ``messages``; element i covers messages[0..i]."""
    out: list[bytes] = []
    prev = SEED_DIGEST
    for m in messages:
        prev = hash_chain(prev, m)
        out.append(prev)
    return out


def chain_head(messages: Sequence[Message]) -> bytes:
    """Digest of the whole list (the seed for an empty list)."""
    digests = chain_of(messages)
    return digests[-1] if digests else SEED_DIGEST


@dataclass
class Clock:
    """Monotone logical clock; all lifecycle timestamps come from here."""

    now: int = 0

    def tick(self, n: int = 1) -> int:
        if n < 0:
            raise ValueError("clock cannot run backwards")
        self.now += n
        return self.now
