"""Orchestration: one ``chat`` call per incoming request.

Turn ``t``'s memory update runs after the answer is returned, on a worker
thread. Turn ``t+1`` of the same session waits for it before assembling its
context, so history is never missing a summary.
"""

from __future__ import annotations

import itertools
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

from .agents import ChatProvider, CompletionParams, render_prompt
from .core import Clock, Message, TokenBudget, TurnRecord, hash_chain
from .da import (
    Summary,
    apply_turn_update,
    derive_note_ops,
    fallback_summary,
    summarize_turn,
)
from .foa import PREAMBLE_TEMPLATE, SeededMemory, SessionView, TurnFailed, run_turn
from .ltm import IntegrationReport, LtmStore, distill_session, rewrite_query
from .session import Resolution, Session, SessionManager

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EngineSettings:
    budget_tokens: int = 2048
    ttl_ticks: int = 128
    gc_work_bound: int = 16
    tau_merge: float = 0.85
    retrieve_k: int = 3
    retrieve_min_sim: float = 0.25
    embed_dimension: int = 64
    da_enabled: bool = True
    ltm_enabled: bool = True
    async_updates: bool = True
    preamble: str = PREAMBLE_TEMPLATE
    reasoning_params: CompletionParams = field(default_factory=CompletionParams)
    memory_params: CompletionParams = field(default_factory=CompletionParams)

    def __post_init__(self) -> None:
        if self.ltm_enabled and not self.da_enabled:
            raise ValueError("long-term memory requires direct-access memory")


@dataclass(frozen=True)
class Event:
    seq: int
    name: str
    session_id: str | None = None
    turn_id: int | None = None


@dataclass(frozen=True)
class ChatResult:
    answer: str
    session_id: str
    resolution: str
    windows_used: int = 0
    prompt_tokens: int = 0
    turn_id: int | None = None
    warnings: tuple[str, ...] = ()

    def to_wire(self) -> dict:
        return {
            "answer": self.answer,
            "session_id": self.session_id,
            "windows_used": self.windows_used,
            "prompt_tokens": self.prompt_tokens,
        }


class Engine:
    def __init__(
        self,
        reasoning_agent: ChatProvider,
        memory_agent: ChatProvider,
        settings: EngineSettings | None = None,
        ltm: LtmStore | None = None,
    ) -> None:
        self.settings = settings or EngineSettings()
        s = self.settings
        self.reasoning_agent = reasoning_agent
        self.memory_agent = memory_agent
        self.budget = TokenBudget(s.budget_tokens)
        self.ltm = ltm if ltm is not None else LtmStore(s.embed_dimension, s.tau_merge)
        if self.ltm.dimension != s.embed_dimension:
            raise ValueError("LTM store dimension differs from embed_dimension")
        self.clock = Clock()
        self.events: list[Event] = []
        self.integration_reports: list[IntegrationReport] = []
        # (session_id, turn_id, window kind, token_count) for every window sent
        self.window_log: list[tuple[str, int, str, int]] = []
        self._event_seq = itertools.count()
        self._event_lock = threading.Lock()
        self.manager = SessionManager(
            ttl_ticks=s.ttl_ticks,
            gc_work_bound=s.gc_work_bound,
            clock=self.clock,
            seed_fn=self._seed if s.ltm_enabled else None,
            on_expire=self._review if s.ltm_enabled else None,
            on_event=self.emit,
        )
        self._executor = ThreadPoolExecutor(max_workers=4, thread_name_prefix="da-update")

    # -- events -----------------------------------------------------------
    def emit(self, name: str, session_id: str | None = None, turn_id: int | None = None) -> None:
        with self._event_lock:
            self.events.append(Event(next(self._event_seq), name, session_id, turn_id))

    def events_named(self, name: str) -> list[Event]:
        with self._event_lock:
            return [e for e in self.events if e.name == name]

    # -- memory hooks -----------------------------------------------------
    def _seed(self, request: Sequence[Message]) -> list[SeededMemory]:
        query, _ = rewrite_query(render_prompt(request), self.memory_agent, self.settings.memory_params)
        if not query.strip():
            return []
        return self.ltm.retrieve(query, self.settings.retrieve_k, self.settings.retrieve_min_sim)

    def _review(self, session: Session) -> None:
        candidates = distill_session(
            session.da, self.memory_agent, session.session_id, self.settings.memory_params
        )
        report = self.ltm.integrate(candidates, self.memory_agent, self.settings.memory_params)
        self.integration_reports.append(report)
        self.emit("ltm_review", session.session_id)

    # -- the turn ---------------------------------------------------------
    def chat(self, messages: Sequence[Message]) -> ChatResult:
        request = list(messages)
        with self.manager.lock:
            self.clock.tick()
            res = self.manager.resolve(request)
        if res.kind == "reuse":
            self.emit("reuse", res.session.session_id)
            return ChatResult(res.answer or "", res.session.session_id, "reuse")
        session = res.session
        with session.lock:
            if not self.manager.matches_prefix(session, request):
                # another request advanced this session first; resolve again
                return self.chat(request)
            return self._turn(session, res, request)

    def _view(self, session: Session) -> SessionView:
        da = session.da
        return SessionView(
            notes=da.active_notes,
            memories=da.seeded_memories,
            summaries=da.turn_summaries,
            turns=self.manager.turn_records(session),
        )

    def _turn(self, session: Session, res: Resolution, request: list[Message]) -> ChatResult:
        session.wait_quiescent()
        turn_id = session.turn_count + 1
        user = request[-1]
        outcome = run_turn(
            self._view(session),
            user.content,
            self.reasoning_agent,
            self.budget,
            preamble=self.settings.preamble,
            params=self.settings.reasoning_params,
            on_event=lambda name: self.emit(name, session.session_id, turn_id),
        )
        with self._event_lock:
            self.window_log.extend(
                (session.session_id, turn_id, w.kind.value, w.token_count) for w in outcome.windows
            )
        answer = Message.assistant(outcome.answer)
        turn_hash = hash_chain(hash_chain(session.head, user), answer)
        record = TurnRecord(
            turn_id=turn_id,
            user_input=user.content,
            response=outcome.answer,
            turn_hash=turn_hash,
            prompt_tokens=outcome.prompt_tokens,
            output_tokens=outcome.output_tokens,
            created_at=self.clock.now,
        )
        self.manager.complete_turn(session, record, user, answer)
        if self.settings.async_updates:
            session.pending = self._executor.submit(self._update, session, record)
        else:
            session.pending = None
            self._update(session, record)
        self.emit("answer_delivered", session.session_id, turn_id)
        return ChatResult(
            outcome.answer,
            session.session_id,
            res.kind,
            outcome.windows_used,
            outcome.prompt_tokens,
            turn_id,
            outcome.warnings,
        )

    def _update(self, session: Session, record: TurnRecord) -> None:
        params = self.settings.memory_params
        if self.settings.da_enabled:
            summary = summarize_turn(record.user_input, record.response, self.memory_agent, params)
            ops, _ = derive_note_ops(summary.text, session.da.notes, self.memory_agent, params)
        else:
            summary = Summary(fallback_summary(record.response), True)
            ops = []
        record = replace(record, summary=summary.text, summary_fallback=summary.fallback)
        session.da = apply_turn_update(session.da, record, ops)
        self.manager.store.set_summary(record.turn_hash, summary.text, summary.fallback)
        self.emit("apply_turn_update", session.session_id, record.turn_id)

    # -- lifecycle --------------------------------------------------------
    def tick(self, n: int = 1):
        return self.manager.tick(n)

    def expire_all(self):
        """Advance past every TTL and drain GC (used between benchmark phases)."""
        self.quiesce()
        with self.manager.lock:
            self.clock.tick(self.settings.ttl_ticks)
            return self.manager.drain()

    def quiesce(self) -> None:
        for s in self.manager.live_sessions():
            s.wait_quiescent()

    def close(self) -> None:
        self.quiesce()
        self._executor.shutdown(wait=True)

    def __enter__(self) -> "Engine":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


__all__ = ["Engine", "EngineSettings", "ChatResult", "Event", "TurnFailed"]
