"""Session cache and lifecycle.

Requests carry the whole message list. ``resolve`` decides whether a request
is answered from cache (reuse), continues a live session (extend), forks a
session whose dialogue is a prefix of the request (inherit), or starts over
(fresh). Turn records are shared between forks and reference counted; expiry
runs only on engine events and does at most ``gc_work_bound`` units of work
per event.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import logging
import threading
from concurrent.futures import Future
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Sequence

from .core import Clock, Message, Role, TurnRecord, chain_of, hash_chain, SEED_DIGEST
from .da import DaState, init_session_da
from .foa import SeededMemory

logger = logging.getLogger(__name__)

TTL_TICKS = 128
GC_WORK_BOUND = 16


class MalformedRequest(ValueError):
    pass


class SessionStatus(str, enum.Enum):
    ACTIVE = "active"
    INACTIVE = "inactive"
    EXPIRED = "expired"


@dataclass(eq=False)
class Session:
    session_id: str
    messages: list[Message] = field(default_factory=list)
    dialogue_hashes: list[bytes] = field(default_factory=list)
    da: DaState = field(default_factory=DaState)
    turn_refs: list[bytes] = field(default_factory=list)
    status: SessionStatus = SessionStatus.ACTIVE
    last_active: int = 0
    answer_cache: dict[bytes, str] = field(default_factory=dict)
    # index into ``messages`` of the user message that opened each turn
    turn_positions: list[int] = field(default_factory=list)
    ancestor_id: str | None = None
    created_seq: int = 0
    pending: Future | None = field(default=None, repr=False)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def message_count(self) -> int:
        return len(self.messages)

    @property
    def head(self) -> bytes:
        return self.dialogue_hashes[-1] if self.dialogue_hashes else SEED_DIGEST

    @property
    def turn_count(self) -> int:
        return len(self.turn_refs)

    def append(self, message: Message) -> None:
        self.dialogue_hashes.append(hash_chain(self.head, message))
        self.messages.append(message)

    def wait_quiescent(self) -> None:
        pending = self.pending
        if pending is not None:
            pending.result()

    def snapshot(self) -> dict:
        """Inspection dump; note and summary bodies are left out."""
        return {
            "session_id": self.session_id,
            "status": self.status.value,
            "last_active": self.last_active,
            "message_count": self.message_count,
            "dialogue_hashes": [h.hex() for h in self.dialogue_hashes],
            "turn_refs": [h.hex() for h in self.turn_refs],
            "ancestor_id": self.ancestor_id,
            "answer_cache_size": len(self.answer_cache),
            "da": {
                "update_cursor": self.da.update_cursor,
                "turn_summaries": [t for t, _ in self.da.turn_summaries],
                "notes": [
                    {
                        "note_id": n.note_id,
                        "status": n.status.value,
                        "source_turns": list(n.source_turns),
                        "revision_of": n.revision_of,
                        "chars": len(n.content),
                    }
                    for n in self.da.notes
                ],
                "seeded_memories": [m.entry_id for m in self.da.seeded_memories],
            },
        }


class TurnStore:
    """turn_hash -> (record, refcount); an entry disappears at refcount 0."""

    def __init__(self) -> None:
        self._entries: dict[bytes, list] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, turn_hash: bytes) -> bool:
        return turn_hash in self._entries

    def add(self, record: TurnRecord) -> int:
        with self._lock:
            slot = self._entries.get(record.turn_hash)
            if slot is None:
                self._entries[record.turn_hash] = [record, 1]
                return 1
            slot[1] += 1
            return slot[1]

    def incref(self, turn_hash: bytes) -> int:
        with self._lock:
            slot = self._entries[turn_hash]
            slot[1] += 1
            return slot[1]

    def decref(self, turn_hash: bytes) -> bool:
        """Drop one reference; True when the entry was freed."""
        with self._lock:
            slot = self._entries[turn_hash]
            slot[1] -= 1
            if slot[1] == 0:
                del self._entries[turn_hash]
                return True
            return False

    def get(self, turn_hash: bytes) -> TurnRecord | None:
        with self._lock:
            slot = self._entries.get(turn_hash)
            return slot[0] if slot else None

    def refcount(self, turn_hash: bytes) -> int:
        with self._lock:
            slot = self._entries.get(turn_hash)
            return slot[1] if slot else 0

    def refcounts(self) -> dict[bytes, int]:
        with self._lock:
            return {h: slot[1] for h, slot in self._entries.items()}

    def restore(self, record: TurnRecord, refcount: int) -> None:
        if refcount < 1:
            raise ValueError("restored turn must have a positive refcount")
        with self._lock:
            self._entries[record.turn_hash] = [record, refcount]

    def records(self) -> list[tuple[TurnRecord, int]]:
        with self._lock:
            return [(slot[0], slot[1]) for slot in self._entries.values()]

    def set_summary(self, turn_hash: bytes, summary: str, fallback: bool = False) -> None:
        with self._lock:
            slot = self._entries.get(turn_hash)
            if slot is not None and not slot[0].summary:
                slot[0] = replace(slot[0], summary=summary, summary_fallback=fallback)


@dataclass(frozen=True)
class Resolution:
    kind: Literal["reuse", "extend", "inherit", "fresh"]
    session: Session | None = None
    answer: str | None = None
    ancestor_id: str | None = None


@dataclass(frozen=True)
class GcReport:
    sessions_expired: int = 0
    turns_freed: int = 0
    work_units: int = 0

    def __add__(self, other: "GcReport") -> "GcReport":
        return GcReport(
            self.sessions_expired + other.sessions_expired,
            self.turns_freed + other.turns_freed,
            self.work_units + other.work_units,
        )


SeedFn = Callable[[Sequence[Message]], Sequence[SeededMemory]]
ExpireHook = Callable[[Session], None]
EventHook = Callable[[str, str | None, int | None], None]


def validate_request(request: Sequence[Message]) -> list[Message]:
    request = list(request)
    if not request:
        raise MalformedRequest("request has no messages")
    if request[-1].role is not Role.USER:
        raise MalformedRequest("the final message must have role 'user'")
    return request


class SessionManager:
    def __init__(
        self,
        ttl_ticks: int = TTL_TICKS,
        gc_work_bound: int = GC_WORK_BOUND,
        clock: Clock | None = None,
        seed_fn: SeedFn | None = None,
        on_expire: ExpireHook | None = None,
        on_event: EventHook | None = None,
    ) -> None:
        if ttl_ticks < 1 or gc_work_bound < 1:
            raise ValueError("ttl_ticks and gc_work_bound must be positive")
        self.ttl_ticks = ttl_ticks
        self.gc_work_bound = gc_work_bound
        self.clock = clock or Clock()
        self.seed_fn = seed_fn
        self.on_expire = on_expire
        self.on_event = on_event
        self.sessions: dict[str, Session] = {}
        self.store = TurnStore()
        self.gc_reports: list[GcReport] = []
        self._heap: list[tuple[int, int, str]] = []
        self.next_session_seq = 1
        self._heap_seq = itertools.count()
        self.lock = threading.RLock()

    @property
    def now(self) -> int:
        return self.clock.now

    def _emit(self, name: str, session_id: str | None = None, turn_id: int | None = None) -> None:
        if self.on_event:
            self.on_event(name, session_id, turn_id)

    # -- bookkeeping ------------------------------------------------------
    def _touch(self, session: Session) -> None:
        session.last_active = self.now
        session.status = SessionStatus.ACTIVE
        heapq.heappush(
            self._heap, (session.last_active + self.ttl_ticks, next(self._heap_seq), session.session_id)
        )

    def _idle(self, session: Session) -> bool:
        return session.last_active + self.ttl_ticks <= self.now

    def refresh_status(self, session: Session) -> SessionStatus:
        if session.status is SessionStatus.ACTIVE and self._idle(session):
            session.status = SessionStatus.INACTIVE
        return session.status

    def _new_session(self, **kwargs) -> Session:
        seq = self.next_session_seq
        self.next_session_seq += 1
        session = Session(session_id=f"s{seq}", created_seq=seq, **kwargs)
        self.sessions[session.session_id] = session
        self._touch(session)
        return session

    def adopt(self, session: Session) -> None:
        """Register a restored session, keeping its last_active time."""
        with self.lock:
            self.sessions[session.session_id] = session
            heapq.heappush(
                self._heap,
                (session.last_active + self.ttl_ticks, next(self._heap_seq), session.session_id),
            )
            self.next_session_seq = max(self.next_session_seq, session.created_seq + 1)

    def live_sessions(self) -> list[Session]:
        return list(self.sessions.values())

    # -- resolution -------------------------------------------------------
    def classify(self, request: Sequence[Message]) -> Resolution:
        """Pick the resolution for ``request`` without changing any state."""
        request = validate_request(request)
        chain = chain_of(request)
        final = chain[-1]
        live = [s for s in self.sessions.values() if s.status is not SessionStatus.EXPIRED]
        recency = lambda s: (s.last_active, s.created_seq)  # noqa: E731

        cached = [s for s in live if final in s.answer_cache]
        if cached:
            best = max(cached, key=recency)
            return Resolution("reuse", best, best.answer_cache[final])

        n = len(request)
        extendable = [
            s
            for s in live
            if self.refresh_status(s) is SessionStatus.ACTIVE
            and s.message_count == n - 1
            and s.head == (chain[n - 2] if n >= 2 else SEED_DIGEST)
        ]
        if extendable:
            return Resolution("extend", max(extendable, key=recency))

        ancestors = [
            s
            for s in live
            if 1 <= s.message_count < n
            and s.head == chain[s.message_count - 1]
            and s not in extendable
        ]
        if ancestors:
            best = max(ancestors, key=lambda s: (s.message_count, *recency(s)))
            return Resolution("inherit", best, ancestor_id=best.session_id)
        return Resolution("fresh")

    def resolve(self, request: Sequence[Message]) -> Resolution:
        with self.lock:
            request = validate_request(request)
            res = self.classify(request)
            if res.kind == "reuse":
                return res
            if res.kind == "extend":
                self._touch(res.session)
                return res
            if res.kind == "inherit":
                child = self.fork_session(res.session, request[res.session.message_count :])
                return Resolution("inherit", child, ancestor_id=res.ancestor_id)
            seeded = tuple(self.seed_fn(request)) if self.seed_fn else ()
            session = self._new_session(da=init_session_da(seeded))
            for m in request[:-1]:
                session.append(m)
            self._emit("session_created", session.session_id)
            self.gc_event()
            return Resolution("fresh", session)

    def fork_session(self, ancestor: Session, request_tail: Sequence[Message]) -> Session:
        """New session continuing ``ancestor``; the ancestor is left untouched.

        ``request_tail`` is the part of the request beyond the ancestor's
        dialogue, ending with the new user message (which is not recorded
        until its turn completes).
        """
        with self.lock:
            ancestor.wait_quiescent()
            child = self._new_session(
                messages=list(ancestor.messages),
                dialogue_hashes=list(ancestor.dialogue_hashes),
                da=replace(ancestor.da),
                turn_refs=list(ancestor.turn_refs),
                answer_cache=dict(ancestor.answer_cache),
                turn_positions=list(ancestor.turn_positions),
                ancestor_id=ancestor.session_id,
            )
            for h in child.turn_refs:
                self.store.incref(h)
            for m in list(request_tail)[:-1]:
                child.append(m)
            self._emit("session_created", child.session_id)
            self.gc_event()
            return child

    def matches_prefix(self, session: Session, request: Sequence[Message]) -> bool:
        """True while ``session`` still records exactly request[:-1]."""
        n = len(request)
        return session.message_count == n - 1 and session.head == (
            chain_of(request[:-1])[-1] if n >= 2 else SEED_DIGEST
        )

    def turn_records(self, session: Session) -> dict[int, TurnRecord]:
        out = {}
        for i, h in enumerate(session.turn_refs, start=1):
            rec = self.store.get(h)
            if rec is not None:
                out[i] = rec if rec.turn_id == i else replace(rec, turn_id=i)
        return out

    def complete_turn(self, session: Session, record: TurnRecord, user: Message, answer: Message) -> None:
        with self.lock:
            request_digest = hash_chain(session.head, user)
            self.store.add(record)
            session.turn_refs.append(record.turn_hash)
            session.turn_positions.append(session.message_count)
            session.append(user)
            session.append(answer)
            session.answer_cache[request_digest] = answer.content
            self._touch(session)
            self._emit("turn_completed", session.session_id, record.turn_id)
            self.gc_event()

    # -- garbage collection -----------------------------------------------
    def tick(self, n: int = 1) -> GcReport:
        with self.lock:
            self.clock.tick(n)
            return self.gc_event()

    def gc_event(self) -> GcReport:
        """Examine at most ``gc_work_bound`` expiry candidates."""
        with self.lock:
            work = expired = freed = 0
            while self._heap and work < self.gc_work_bound:
                deadline, _, sid = self._heap[0]
                work += 1
                if deadline > self.now:
                    break
                heapq.heappop(self._heap)
                session = self.sessions.get(sid)
                if session is None or session.last_active + self.ttl_ticks != deadline:
                    continue  # superseded by a later touch, or already gone
                freed += self._expire(session)
                expired += 1
            report = GcReport(expired, freed, work)
            self.gc_reports.append(report)
            self._emit("gc_event")
            return report

    def expire_pass(self, now: int | None = None) -> GcReport:
        with self.lock:
            if now is not None and now > self.now:
                self.clock.tick(now - self.now)
            return self.gc_event()

    def drain(self, max_events: int = 1_000_000) -> GcReport:
        """Fire GC events until nothing else is due."""
        total = GcReport()
        with self.lock:
            for _ in range(max_events):
                report = self.gc_event()
                total = total + report
                if not self._heap or self._heap[0][0] > self.now:
                    break
        return total

    def _expire(self, session: Session) -> int:
        session.status = SessionStatus.INACTIVE
        clean = True
        try:
            session.wait_quiescent()
        except Exception:  # a failed update must not block cleanup
            logger.exception("pending update of %s failed; skipping review", session.session_id)
            clean = False
        if clean and self.on_expire is not None:
            try:
                self.on_expire(session)
            except Exception:
                logger.exception("end-of-session review of %s failed", session.session_id)
        freed = 0
        for h in session.turn_refs:
            if self.store.decref(h):
                freed += 1
        session.turn_refs = []
        session.answer_cache.clear()
        session.da = DaState()
        session.status = SessionStatus.EXPIRED
        del self.sessions[session.session_id]
        self._emit("session_expired", session.session_id)
        return freed
