"""Focus of attention: per-turn context windows and the two-pass protocol.

A turn sends a *first* window (notes, memories, summarised history, input).
The reasoning agent either answers (``SUFFICIENT``) or names earlier turns it
wants verbatim (``NEED_TURNS: 2, 5``); in that case a *second* window with
those turns expanded is sent and must be answered. There is no third pass.
"""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .agents import ChatProvider, CompletionParams, TransportError, MalformedResponse
from .core import Message, Note, TokenBudget, TurnRecord, estimate_tokens

logger = logging.getLogger(__name__)


PREAMBLE_TEMPLATE = (
    "You are the reasoning agent of a memory-augmented dialogue system. "
    "This is the {KIND} context window for the current turn.\n"
    "The context is rebuilt every turn. MEMORY lines are long-term strategies, "
    "NOTE lines are the session's working notes, lines starting with [turn N] "
    "summarise earlier turns, TURN N DETAIL blocks repeat earlier turns verbatim "
    "and USER INPUT is the new message.\n"
    "Reply in exactly one of two forms. If the context is enough, write "
    "SUFFICIENT alone on the first line and your answer below it. If you need "
    "earlier turns in full, write a single line NEED_TURNS: followed by "
    "comma-separated turn numbers. Turns can be requested at most once per turn."
)

# Slot order of a rendered window. Each slot receives the rendered segments of
# its group, already newline-terminated.
WINDOW_TEMPLATE = "{PREAMBLE}{LTM_MEMORIES}{NOTES}{HISTORY}{EXPANDED_TURNS}{USER_INPUT}"


class BudgetExceeded(Exception):
    def __init__(self, needed: int, budget: int) -> None:
        self.needed = needed
        self.budget = budget
        super().__init__(
            f"context needs {needed} tokens after eviction, budget is {budget}"
        )


class ProtocolViolation(Exception):
    def __init__(self, raw: str, reason: str = "unrecognised reply") -> None:
        self.raw = raw
        super().__init__(f"{reason}: {raw[:120]!r}")


class TurnFailed(Exception):
    pass


class SegmentTag(str, enum.Enum):
    PREAMBLE = "preamble"
    LTM_MEMORY = "ltm_memory"
    NOTE = "note"
    HISTORY_SUMMARY = "history_summary"
    EXPANDED_TURN = "expanded_turn"
    USER_INPUT = "user_input"


_GROUP_SLOT = {
    SegmentTag.PREAMBLE: "PREAMBLE",
    SegmentTag.LTM_MEMORY: "LTM_MEMORIES",
    SegmentTag.NOTE: "NOTES",
    SegmentTag.HISTORY_SUMMARY: "HISTORY",
    SegmentTag.EXPANDED_TURN: "EXPANDED_TURNS",
    SegmentTag.USER_INPUT: "USER_INPUT",
}
_ORDER = list(_GROUP_SLOT)


class WindowKind(str, enum.Enum):
    FIRST = "first"
    SECOND = "second"


@dataclass(frozen=True)
class Segment:
    tag: SegmentTag
    body: str
    turn_id: int | None = None
    score: float | None = None  # retrieval similarity, ltm_memory only

    def __post_init__(self) -> None:
        if self.tag in (SegmentTag.HISTORY_SUMMARY, SegmentTag.EXPANDED_TURN) and self.turn_id is None:
            raise ValueError(f"{self.tag.value} segment needs a turn_id")

    def render(self) -> str:
        if self.tag is SegmentTag.LTM_MEMORY:
            return f"MEMORY: {self.body}\n"
        if self.tag is SegmentTag.NOTE:
            return f"NOTE: {self.body}\n"
        if self.tag is SegmentTag.HISTORY_SUMMARY:
            return f"[turn {self.turn_id}] {self.body}\n"
        if self.tag is SegmentTag.EXPANDED_TURN:
            return f"TURN {self.turn_id} DETAIL:\n{self.body}\n"
        if self.tag is SegmentTag.USER_INPUT:
            return f"USER INPUT: {self.body}\n"
        return f"{self.body}\n"

    @property
    def tokens(self) -> int:
        return estimate_tokens(self.render())


@dataclass(frozen=True)
class ContextWindow:
    kind: WindowKind
    segments: tuple[Segment, ...]
    token_count: int
    warnings: tuple[str, ...] = ()

    def render(self) -> str:
        slots = {name: "" for name in _GROUP_SLOT.values()}
        for seg in self.segments:
            slots[_GROUP_SLOT[seg.tag]] += seg.render()
        return WINDOW_TEMPLATE.format(**slots)

    def tagged(self, tag: SegmentTag) -> list[Segment]:
        return [s for s in self.segments if s.tag is tag]

    def turn_ids(self, tag: SegmentTag) -> list[int]:
        return [s.turn_id for s in self.segments if s.tag is tag]


@dataclass(frozen=True)
class SeededMemory:
    entry_id: str
    content: str
    similarity: float


@dataclass(frozen=True)
class SessionView:
    """Immutable snapshot of what a turn may draw on."""

    notes: tuple[Note, ...] = ()
    memories: tuple[SeededMemory, ...] = ()
    summaries: tuple[tuple[int, str], ...] = ()
    turns: Mapping[int, TurnRecord] = field(default_factory=dict)


@dataclass(frozen=True)
class SufficiencyVerdict:
    answer: str | None = None
    turn_ids: tuple[int, ...] = ()

    @property
    def sufficient(self) -> bool:
        return self.answer is not None

    @classmethod
    def need_turns(cls, ids: Iterable[int]) -> "SufficiencyVerdict":
        return cls(None, tuple(dict.fromkeys(ids)))


_NEED_RE = re.compile(r"^NEED_TURNS:\s*(.*)$")


def parse_sufficiency(agent_output: str) -> SufficiencyVerdict:
    lines = agent_output.splitlines()
    idx = next((i for i, line in enumerate(lines) if line.strip()), None)
    if idx is None:
        raise ProtocolViolation(agent_output, "empty reply")
    head = lines[idx].strip()
    if head == "SUFFICIENT":
        answer = "\n".join(lines[idx + 1 :]).strip()
        if not answer:
            raise ProtocolViolation(agent_output, "SUFFICIENT without an answer")
        return SufficiencyVerdict(answer=answer)
    m = _NEED_RE.match(head)
    if m:
        parts = [p.strip() for p in m.group(1).split(",")]
        if not parts or not all(p.isdigit() and int(p) > 0 for p in parts):
            raise ProtocolViolation(agent_output, "bad NEED_TURNS list")
        return SufficiencyVerdict.need_turns(int(p) for p in parts)
    raise ProtocolViolation(agent_output)


def _preamble(kind: WindowKind, template: str) -> Segment:
    return Segment(SegmentTag.PREAMBLE, template.replace("{KIND}", kind.value))


def _fit(
    kind: WindowKind,
    segments: list[Segment],
    eviction_order: Sequence[Segment],
    budget: TokenBudget,
    warnings: Sequence[str] = (),
) -> ContextWindow:
    total = sum(s.tokens for s in segments)
    evicted: set[int] = set()
    for victim in eviction_order:
        if total <= budget.max_window_tokens:
            break
        evicted.add(id(victim))
        total -= victim.tokens
    if total > budget.max_window_tokens:
        raise BudgetExceeded(total, budget.max_window_tokens)
    kept = tuple(s for s in segments if id(s) not in evicted)
    kept = tuple(sorted(kept, key=lambda s: _ORDER.index(s.tag)))
    return ContextWindow(kind, kept, total, tuple(warnings))


def _by_weakest(memories: Iterable[Segment]) -> list[Segment]:
    mem = list(memories)
    # lowest similarity first; among equals the later-ranked one goes first
    return sorted(reversed(mem), key=lambda s: s.score if s.score is not None else 0.0)


def assemble_first_window(
    view: SessionView,
    user_input: str,
    budget: TokenBudget,
    preamble: str = PREAMBLE_TEMPLATE,
) -> ContextWindow:
    if not user_input.strip():
        raise ValueError("user_input must be non-empty")
    memories = [
        Segment(SegmentTag.LTM_MEMORY, m.content, score=m.similarity) for m in view.memories
    ]
    notes = [Segment(SegmentTag.NOTE, n.content) for n in view.notes if n.active]
    history = [
        Segment(SegmentTag.HISTORY_SUMMARY, text, turn_id=tid)
        for tid, text in sorted(view.summaries, key=lambda p: p[0])
    ]
    segments = [
        _preamble(WindowKind.FIRST, preamble),
        *memories,
        *notes,
        *history,
        Segment(SegmentTag.USER_INPUT, user_input),
    ]
    return _fit(WindowKind.FIRST, segments, [*history, *_by_weakest(memories)], budget)


def expand_turn_body(record: TurnRecord) -> str:
    return f"USER: {record.user_input}\nASSISTANT: {record.response}"


def assemble_second_window(
    first: ContextWindow,
    full_turns: Iterable[TurnRecord],
    requested_ids: Sequence[int],
    budget: TokenBudget,
    preamble: str = PREAMBLE_TEMPLATE,
) -> ContextWindow:
    if first.kind is not WindowKind.FIRST:
        raise ValueError("second window must be built from a first window")
    by_id = {t.turn_id: t for t in full_turns}
    warnings: list[str] = []
    wanted: list[int] = []
    for tid in dict.fromkeys(requested_ids):
        if tid in by_id:
            wanted.append(tid)
        else:
            warnings.append(f"requested turn {tid} is not stored; skipped")
    if warnings:
        logger.warning("; ".join(warnings))
    memories = first.tagged(SegmentTag.LTM_MEMORY)
    notes = first.tagged(SegmentTag.NOTE)
    history = [s for s in first.tagged(SegmentTag.HISTORY_SUMMARY) if s.turn_id not in wanted]
    expanded = [
        Segment(SegmentTag.EXPANDED_TURN, expand_turn_body(by_id[tid]), turn_id=tid)
        for tid in sorted(wanted)
    ]
    segments = [
        _preamble(WindowKind.SECOND, preamble),
        *memories,
        *notes,
        *history,
        *expanded,
        *first.tagged(SegmentTag.USER_INPUT),
    ]
    order = [*history, *_by_weakest(memories), *expanded]
    return _fit(WindowKind.SECOND, segments, order, budget, warnings)


@dataclass(frozen=True)
class TurnOutcome:
    answer: str
    windows_used: int
    prompt_tokens: int
    output_tokens: int = 0
    windows: tuple[ContextWindow, ...] = ()
    warnings: tuple[str, ...] = ()


EventHook = Callable[[str], None]


def run_turn(
    view: SessionView,
    user_input: str,
    reasoning_agent: ChatProvider,
    budget: TokenBudget,
    *,
    preamble: str = PREAMBLE_TEMPLATE,
    params: CompletionParams | None = None,
    on_event: EventHook | None = None,
) -> TurnOutcome:
    """Run one dialogue turn: first window, optional second window, answer.

    A reply that breaks the protocol is retried once with the same window;
    a second failure raises :class:`TurnFailed`. Asking for turns again in
    the second window counts as a protocol violation.
    """
    sent: list[ContextWindow] = []
    output_tokens = 0

    def ask(window: ContextWindow, allow_need: bool) -> SufficiencyVerdict:
        nonlocal output_tokens
        last: Exception | None = None
        for _ in range(2):
            try:
                completion = reasoning_agent.complete([Message.user(window.render())], params)
            except (TransportError, MalformedResponse) as exc:
                raise TurnFailed(f"reasoning agent unavailable: {exc}") from exc
            sent.append(window)
            output_tokens += completion.output_tokens
            try:
                verdict = parse_sufficiency(completion.text)
            except ProtocolViolation as exc:
                last = exc
                continue
            if verdict.sufficient or allow_need:
                return verdict
            last = ProtocolViolation(completion.text, "second NEED_TURNS in one turn")
        raise TurnFailed(f"protocol violation after retry: {last}") from last

    if on_event:
        on_event("assemble_first_window")
    try:
        first = assemble_first_window(view, user_input, budget, preamble)
    except BudgetExceeded as exc:
        raise TurnFailed(str(exc)) from exc
    verdict = ask(first, allow_need=True)
    windows_used = 1
    warnings: tuple[str, ...] = ()
    if not verdict.sufficient:
        try:
            second = assemble_second_window(
                first, view.turns.values(), verdict.turn_ids, budget, preamble
            )
        except BudgetExceeded as exc:
            raise TurnFailed(str(exc)) from exc
        warnings = second.warnings
        verdict = ask(second, allow_need=False)
        windows_used = 2
    return TurnOutcome(
        answer=verdict.answer or "",
        windows_used=windows_used,
        prompt_tokens=sum(w.token_count for w in sent),
        output_tokens=output_tokens,
        windows=tuple(sent),
        warnings=warnings,
    )
