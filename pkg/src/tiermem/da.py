"""Direct-access memory: the session's notes ledger and turn summaries."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, replace
from typing import Iterable, Literal, Sequence

from .agents import ChatProvider, CompletionParams, MalformedResponse, TransportError
from .core import Message, Note, NoteStatus, TurnRecord
from .foa import SeededMemory

logger = logging.getLogger(__name__)

FALLBACK_SUMMARY_CHARS = 200

SUMMARY_TEMPLATE = (
    "TASK: summarize-turn\n"
    "Summarise this dialogue turn in a few sentences. Keep every concrete "
    "observation, result and decision.\n"
    "USER:\n{USER_INPUT}\n"
    "RESPONSE:\n{RESPONSE}"
)

NOTE_OPS_TEMPLATE = (
    "TASK: update-notes\n"
    "Maintain the session notes (plans, sub-goals, intermediate conclusions). "
    "Reply with one operation per line, using only these forms:\n"
    "ADD: <text>\nREVISE <note id>: <text>\nRETIRE <note id>\n"
    "Reply with nothing if no change is needed.\n"
    "CURRENT NOTES:\n{NOTES}\n"
    "NEW TURN SUMMARY:\n{SUMMARY}"
)


class OrderingError(RuntimeError):
    """A turn update arrived out of sequence; the orchestration is broken."""


@dataclass(frozen=True)
class NoteOp:
    kind: Literal["add", "revise", "retire"]
    note_id: str | None = None
    content: str | None = None

    @classmethod
    def add(cls, content: str) -> "NoteOp":
        return cls("add", None, content)

    @classmethod
    def revise(cls, note_id: str, content: str) -> "NoteOp":
        return cls("revise", note_id, content)

    @classmethod
    def retire(cls, note_id: str) -> "NoteOp":
        return cls("retire", note_id, None)


@dataclass(frozen=True)
class DaState:
    notes: tuple[Note, ...] = ()
    turn_summaries: tuple[tuple[int, str], ...] = ()
    seeded_memories: tuple[SeededMemory, ...] = ()
    update_cursor: int = 0
    next_note_seq: int = 1

    @property
    def active_notes(self) -> tuple[Note, ...]:
        return tuple(n for n in self.notes if n.active)

    def note(self, note_id: str) -> Note | None:
        return next((n for n in self.notes if n.note_id == note_id), None)


@dataclass(frozen=True)
class Summary:
    text: str
    fallback: bool = False


def init_session_da(retrieved: Iterable[SeededMemory] = ()) -> DaState:
    return DaState(seeded_memories=tuple(retrieved))


def fallback_summary(response: str) -> str:
    return response[:FALLBACK_SUMMARY_CHARS]


def _call_with_retry(agent: ChatProvider, prompt: str, params: CompletionParams | None) -> str | None:
    for attempt in (1, 2):
        try:
            return agent.complete([Message.user(prompt)], params).text
        except (TransportError, MalformedResponse) as exc:
            logger.warning("memory agent call failed (attempt %d): %s", attempt, exc)
    return None


def summarize_turn(
    user_input: str,
    response: str,
    memory_agent: ChatProvider,
    params: CompletionParams | None = None,
) -> Summary:
    prompt = SUMMARY_TEMPLATE.replace("{USER_INPUT}", user_input).replace("{RESPONSE}", response)
    text = _call_with_retry(memory_agent, prompt, params)
    if text is None or not text.strip():
        return Summary(fallback_summary(response) or user_input[:FALLBACK_SUMMARY_CHARS], True)
    return Summary(text.strip())


def render_notes(notes: Iterable[Note]) -> str:
    return "\n".join(f"[{n.note_id}] {n.content}" for n in notes if n.active) or "(none)"


_ADD_RE = re.compile(r"^ADD:\s*(.+)$")
_REVISE_RE = re.compile(r"^REVISE\s+(\S+?):\s*(.+)$")
_RETIRE_RE = re.compile(r"^RETIRE\s+(\S+)$")


def parse_note_ops(text: str, known_ids: Iterable[str]) -> tuple[list[NoteOp], list[str]]:
    """Parse one op per line. Bad lines and unknown ids are dropped with a warning."""
    known = set(known_ids)
    ops: list[NoteOp] = []
    warnings: list[str] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if m := _ADD_RE.match(line):
            ops.append(NoteOp.add(m.group(1).strip()))
            continue
        m = _REVISE_RE.match(line) or _RETIRE_RE.match(line)
        if m is None:
            warnings.append(f"malformed note op dropped: {line[:80]!r}")
            continue
        note_id = m.group(1)
        if note_id not in known:
            warnings.append(f"note op for unknown id {note_id!r} dropped")
            continue
        if m.re is _REVISE_RE:
            ops.append(NoteOp.revise(note_id, m.group(2).strip()))
        else:
            ops.append(NoteOp.retire(note_id))
    for w in warnings:
        logger.warning(w)
    return ops, warnings


def derive_note_ops(
    summary: str,
    existing_notes: Sequence[Note],
    memory_agent: ChatProvider,
    params: CompletionParams | None = None,
) -> tuple[list[NoteOp], list[str]]:
    active = [n for n in existing_notes if n.active]
    prompt = NOTE_OPS_TEMPLATE.replace("{NOTES}", render_notes(active)).replace("{SUMMARY}", summary)
    try:
        text = memory_agent.complete([Message.user(prompt)], params).text
    except (TransportError, MalformedResponse) as exc:
        logger.warning("note derivation skipped: %s", exc)
        return [], [f"note derivation skipped: {exc}"]
    return parse_note_ops(text, (n.note_id for n in active))


def apply_turn_update(state: DaState, turn: TurnRecord, ops: Sequence[NoteOp]) -> DaState:
    if turn.turn_id != state.update_cursor + 1:
        raise OrderingError(
            f"turn {turn.turn_id} applied with update cursor at {state.update_cursor}"
        )
    notes = list(state.notes)
    seq = state.next_note_seq

    def find_active(note_id: str | None) -> int | None:
        for i, n in enumerate(notes):
            if n.note_id == note_id and n.active:
                return i
        logger.warning("note op on missing or inactive note %r ignored", note_id)
        return None

    for op in ops:
        if op.kind == "add":
            notes.append(Note(f"n{seq}", op.content or "", source_turns=(turn.turn_id,)))
            seq += 1
        elif op.kind == "revise":
            i = find_active(op.note_id)
            if i is None:
                continue
            old = notes[i]
            notes[i] = replace(old, status=NoteStatus.REVISED)
            notes.append(
                Note(
                    f"n{seq}",
                    op.content or "",
                    source_turns=(turn.turn_id,),
                    revision_of=old.note_id,
                )
            )
            seq += 1
        elif op.kind == "retire":
            i = find_active(op.note_id)
            if i is not None:
                notes[i] = replace(notes[i], status=NoteStatus.RETIRED)
    return replace(
        state,
        notes=tuple(notes),
        turn_summaries=state.turn_summaries + ((turn.turn_id, turn.summary),),
        update_cursor=turn.turn_id,
        next_note_seq=seq,
    )
