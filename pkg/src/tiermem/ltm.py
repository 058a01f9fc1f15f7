"""Long-term memory: distilled cross-session insights behind a vector index."""

from __future__ import annotations

import enum
import json
import logging
import os
import re
import threading
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .agents import ChatProvider, CompletionParams, MalformedResponse, TransportError
from .core import HASH_ALGORITHM, Message
from .foa import SeededMemory
from .vector_index import DEFAULT_DIMENSION, IndexEntry, VectorIndex, embed

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
TAU_MERGE = 0.85
RETRIEVE_K = 3
RETRIEVE_MIN_SIM = 0.25
TRIVIAL_CHARS = 12
MERGE_SEPARATOR = " | "

REWRITE_TEMPLATE = (
    "TASK: rewrite-query\n"
    "Rewrite the situation below as a short descriptive query for finding "
    "relevant long-term strategies. Reply with the query only.\n"
    "SITUATION:\n{SITUATION}"
)

DISTILL_TEMPLATE = (
    "TASK: distill-session\n"
    "Review this finished session. For each insight worth keeping across "
    "sessions write one line KEEP: <insight>. Write DROP for anything else.\n"
    "NOTES:\n{NOTES}\n"
    "TURN SUMMARIES:\n{SUMMARIES}"
)

MERGE_TEMPLATE = (
    "TASK: merge-memories\n"
    "Combine these two related long-term memories into one concise memory. "
    "Reply with the merged text only.\n"
    "A: {A}\nB: {B}"
)


class LtmStatus(str, enum.Enum):
    LIVE = "live"
    TOMBSTONED = "tombstoned"


class RefusedLoad(Exception):
    pass


class SnapshotError(Exception):
    def __init__(self, line_no: int, reason: str) -> None:
        self.line_no = line_no
        super().__init__(f"line {line_no}: {reason}")


@dataclass(frozen=True)
class LtmEntry:
    entry_id: str
    content: str
    vector: np.ndarray = field(compare=False)
    source_sessions: frozenset[str] = frozenset()
    use_count: int = 0
    created_at: int = 0
    updated_at: int = 0
    status: LtmStatus = LtmStatus.LIVE

    def to_record(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "content": self.content,
            "vector": [float(x) for x in self.vector],
            "source_sessions": sorted(self.source_sessions),
            "use_count": self.use_count,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "status": self.status.value,
        }

    def same_as(self, other: "LtmEntry") -> bool:
        """Field-exact equality including the vector."""
        return self == other and np.array_equal(self.vector, other.vector)


@dataclass(frozen=True)
class Candidate:
    content: str
    session_id: str = ""
    turn_ids: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not self.content.strip():
            raise ValueError("candidate content must be non-empty")


@dataclass(frozen=True)
class IntegrationReport:
    merged: int = 0
    added: int = 0
    excluded: int = 0


def _ask(agent: ChatProvider, prompt: str, params: CompletionParams | None) -> str:
    return agent.complete([Message.user(prompt)], params).text


def rewrite_query(
    dialogue_head: str, memory_agent: ChatProvider, params: CompletionParams | None = None
) -> tuple[str, bool]:
    """Returns (query, fell_back)."""
    try:
        text = _ask(memory_agent, REWRITE_TEMPLATE.replace("{SITUATION}", dialogue_head), params)
    except (TransportError, MalformedResponse) as exc:
        logger.warning("query rewrite failed, using the dialogue head: %s", exc)
        return dialogue_head, True
    text = text.strip()
    return (text, False) if text else (dialogue_head, True)


_KEEP_RE = re.compile(r"^KEEP:\s*(.+)$")


def parse_distillation(text: str) -> list[str]:
    return [m.group(1).strip() for line in text.splitlines() if (m := _KEEP_RE.match(line.strip()))]


def distill_session(
    final_da,
    memory_agent: ChatProvider,
    session_id: str = "",
    params: CompletionParams | None = None,
) -> list[Candidate]:
    notes = [n for n in final_da.notes if n.active]
    summaries = list(final_da.turn_summaries)
    if not notes and not summaries:
        return []
    prompt = DISTILL_TEMPLATE.replace(
        "{NOTES}", "\n".join(n.content for n in notes) or "(none)"
    ).replace("{SUMMARIES}", "\n".join(f"[turn {t}] {s}" for t, s in summaries) or "(none)")
    try:
        text = _ask(memory_agent, prompt, params)
    except (TransportError, MalformedResponse) as exc:
        logger.warning("distillation of session %s failed, knowledge dropped: %s", session_id, exc)
        return []
    turn_ids = tuple(t for t, _ in summaries)
    return [Candidate(c, session_id, turn_ids) for c in parse_distillation(text)]


class LtmStore:
    def __init__(
        self,
        dimension: int = DEFAULT_DIMENSION,
        tau_merge: float = TAU_MERGE,
    ) -> None:
        self.dimension = dimension
        self.tau_merge = tau_merge
        self._entries: dict[str, LtmEntry] = {}
        self._index = VectorIndex(dimension)
        self._clock = 0
        self._next_id = 1
        self._lock = threading.RLock()

    # -- inspection -------------------------------------------------------
    def __len__(self) -> int:
        return len(self._entries)

    def entries(self) -> list[LtmEntry]:
        with self._lock:
            return list(self._entries.values())

    def live_entries(self) -> list[LtmEntry]:
        return [e for e in self.entries() if e.status is LtmStatus.LIVE]

    def get(self, entry_id: str) -> LtmEntry | None:
        return self._entries.get(entry_id)

    def embed(self, text: str) -> np.ndarray:
        return embed(text, self.dimension)

    # -- mutation ---------------------------------------------------------
    def _tick(self) -> int:
        self._clock += 1
        return self._clock

    def _put(self, entry: LtmEntry) -> None:
        self._entries[entry.entry_id] = entry
        if entry.status is LtmStatus.LIVE:
            self._index.upsert(IndexEntry(entry.entry_id, entry.vector, entry.entry_id))
        else:
            self._index.remove(entry.entry_id)

    def add(self, content: str, source_sessions: Iterable[str] = ()) -> LtmEntry:
        with self._lock:
            now = self._tick()
            entry = LtmEntry(
                entry_id=f"m{self._next_id}",
                content=content,
                vector=self.embed(content),
                source_sessions=frozenset(source_sessions),
                created_at=now,
                updated_at=now,
            )
            self._next_id += 1
            self._put(entry)
            return entry

    def update_content(self, entry_id: str, content: str, extra_sessions: Iterable[str] = ()) -> LtmEntry:
        with self._lock:
            old = self._entries[entry_id]
            entry = replace(
                old,
                content=content,
                vector=self.embed(content),
                source_sessions=old.source_sessions | frozenset(extra_sessions),
                updated_at=self._tick(),
            )
            self._put(entry)
            return entry

    def tombstone(self, entry_id: str) -> bool:
        with self._lock:
            old = self._entries.get(entry_id)
            if old is None or old.status is LtmStatus.TOMBSTONED:
                return False
            self._put(replace(old, status=LtmStatus.TOMBSTONED, updated_at=self._tick()))
            return True

    # -- retrieval --------------------------------------------------------
    def search(self, query: str, k: int, min_sim: float) -> list[tuple[LtmEntry, float]]:
        with self._lock:
            hits = self._index.search_top_k(self.embed(query), k, min_sim)
            return [(self._entries[eid], sim) for eid, sim in hits]

    def retrieve(
        self, query: str, k: int = RETRIEVE_K, min_sim: float = RETRIEVE_MIN_SIM
    ) -> list[SeededMemory]:
        with self._lock:
            out = []
            for entry, sim in self.search(query, k, min_sim):
                self._entries[entry.entry_id] = replace(entry, use_count=entry.use_count + 1)
                out.append(SeededMemory(entry.entry_id, entry.content, sim))
            return out

    # -- integration ------------------------------------------------------
    def integrate(
        self,
        candidates: Sequence[Candidate],
        memory_agent: ChatProvider | None = None,
        params: CompletionParams | None = None,
    ) -> IntegrationReport:
        merged = added = excluded = 0
        with self._lock:
            for cand in candidates:
                sessions = [cand.session_id] if cand.session_id else []
                top = self.search(cand.content, 1, -1.0)
                if top and top[0][1] >= self.tau_merge:
                    entry = top[0][0]
                    try:
                        text = self._merge_text(entry.content, cand.content, memory_agent, params)
                    except (TransportError, MalformedResponse) as exc:
                        logger.warning("merge failed, candidate excluded: %s", exc)
                        excluded += 1
                        continue
                    self.update_content(entry.entry_id, text, sessions)
                    merged += 1
                elif len(cand.content.strip()) < TRIVIAL_CHARS:
                    excluded += 1
                else:
                    self.add(cand.content.strip(), sessions)
                    added += 1
        return IntegrationReport(merged, added, excluded)

    @staticmethod
    def _merge_text(
        existing: str, incoming: str, agent: ChatProvider | None, params: CompletionParams | None
    ) -> str:
        if " ".join(existing.split()) == " ".join(incoming.split()):
            return existing
        if agent is None:
            return existing + MERGE_SEPARATOR + incoming
        text = _ask(agent, MERGE_TEMPLATE.replace("{A}", existing).replace("{B}", incoming), params)
        return text.strip() or existing + MERGE_SEPARATOR + incoming

    # -- persistence ------------------------------------------------------
    def header(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "dimension": self.dimension,
            "hash_algorithm": HASH_ALGORITHM,
        }

    def persist(self, path: str | os.PathLike) -> None:
        with self._lock:
            lines = [json.dumps(self.header(), sort_keys=True)]
            lines += [json.dumps(e.to_record(), sort_keys=True) for e in self._entries.values()]
        tmp = f"{os.fspath(path)}.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        os.replace(tmp, path)

    @classmethod
    def load(
        cls,
        path: str | os.PathLike,
        dimension: int = DEFAULT_DIMENSION,
        tau_merge: float = TAU_MERGE,
    ) -> "LtmStore":
        store = cls(dimension, tau_merge)
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines:
            raise SnapshotError(1, "missing header")
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise SnapshotError(1, f"header is not valid JSON: {exc}") from exc
        expected = store.header()
        if not isinstance(header, dict) or header != expected:
            raise RefusedLoad(f"snapshot header {header!r} does not match {expected!r}")
        max_id = 0
        for no, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                vector = np.asarray(rec["vector"], dtype=np.float64)
                if vector.shape != (dimension,):
                    raise ValueError(f"vector has {vector.size} values, expected {dimension}")
                entry = LtmEntry(
                    entry_id=str(rec["entry_id"]),
                    content=str(rec["content"]),
                    vector=vector,
                    source_sessions=frozenset(rec["source_sessions"]),
                    use_count=int(rec["use_count"]),
                    created_at=int(rec["created_at"]),
                    updated_at=int(rec["updated_at"]),
                    status=LtmStatus(rec["status"]),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise SnapshotError(no, str(exc)) from exc
            if entry.entry_id in store._entries:
                raise SnapshotError(no, f"duplicate entry id {entry.entry_id!r}")
            store._put(entry)
            store._clock = max(store._clock, entry.created_at, entry.updated_at)
            if m := re.fullmatch(r"m(\d+)", entry.entry_id):
                max_id = max(max_id, int(m.group(1)))
        store._next_id = max_id + 1
        return store

    def same_as(self, other: "LtmStore") -> bool:
        mine, theirs = self.entries(), other.entries()
        return (
            self.header() == other.header()
            and len(mine) == len(theirs)
            and all(a.same_as(b) for a, b in zip(mine, theirs))
        )
