"""Save and restore an engine's session layer as one JSON document.

Long-term memory has its own snapshot format and is not included here.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from .core import Message, Note, NoteStatus, TurnRecord
from .da import DaState
from .foa import SeededMemory
from .session import Session, SessionManager, SessionStatus

STATE_FORMAT_VERSION = 1


class StateError(ValueError):
    pass


def _record(rec: TurnRecord, refcount: int) -> dict:
    return {
        "turn_id": rec.turn_id,
        "user_input": rec.user_input,
        "response": rec.response,
        "turn_hash": rec.turn_hash.hex(),
        "summary": rec.summary,
        "prompt_tokens": rec.prompt_tokens,
        "output_tokens": rec.output_tokens,
        "created_at": rec.created_at,
        "summary_fallback": rec.summary_fallback,
        "refcount": refcount,
    }


def _da(da: DaState) -> dict:
    return {
        "notes": [
            {
                "note_id": n.note_id,
                "content": n.content,
                "status": n.status.value,
                "source_turns": list(n.source_turns),
                "revision_of": n.revision_of,
            }
            for n in da.notes
        ],
        "turn_summaries": [[t, text] for t, text in da.turn_summaries],
        "seeded_memories": [[m.entry_id, m.content, m.similarity] for m in da.seeded_memories],
        "update_cursor": da.update_cursor,
        "next_note_seq": da.next_note_seq,
    }


def _session(s: Session) -> dict:
    return {
        "session_id": s.session_id,
        "messages": [m.to_wire() for m in s.messages],
        "da": _da(s.da),
        "turn_refs": [h.hex() for h in s.turn_refs],
        "status": s.status.value,
        "last_active": s.last_active,
        "answer_cache": {h.hex(): a for h, a in s.answer_cache.items()},
        "turn_positions": s.turn_positions,
        "ancestor_id": s.ancestor_id,
        "created_seq": s.created_seq,
    }


def dump_state(manager: SessionManager) -> dict:
    with manager.lock:
        for s in manager.live_sessions():
            s.wait_quiescent()
        return {
            "format_version": STATE_FORMAT_VERSION,
            "clock": manager.now,
            "next_session_seq": manager.next_session_seq,
            "turns": [_record(r, c) for r, c in manager.store.records()],
            "sessions": [_session(s) for s in manager.live_sessions()],
        }


def _load_da(obj: dict) -> DaState:
    return DaState(
        notes=tuple(
            Note(
                n["note_id"],
                n["content"],
                NoteStatus(n["status"]),
                tuple(n["source_turns"]),
                n["revision_of"],
            )
            for n in obj["notes"]
        ),
        turn_summaries=tuple((int(t), str(text)) for t, text in obj["turn_summaries"]),
        seeded_memories=tuple(SeededMemory(i, c, float(sim)) for i, c, sim in obj["seeded_memories"]),
        update_cursor=int(obj["update_cursor"]),
        next_note_seq=int(obj["next_note_seq"]),
    )


def restore_state(manager: SessionManager, state: dict) -> None:
    """Load ``state`` into an empty manager."""
    if state.get("format_version") != STATE_FORMAT_VERSION:
        raise StateError(f"unsupported state format {state.get('format_version')!r}")
    if manager.sessions or len(manager.store):
        raise StateError("restore needs an empty session manager")
    try:
        if state["clock"] > manager.now:
            manager.clock.tick(state["clock"] - manager.now)
        for t in state["turns"]:
            rec = TurnRecord(
                turn_id=t["turn_id"],
                user_input=t["user_input"],
                response=t["response"],
                turn_hash=bytes.fromhex(t["turn_hash"]),
                summary=t["summary"],
                prompt_tokens=t["prompt_tokens"],
                output_tokens=t["output_tokens"],
                created_at=t["created_at"],
                summary_fallback=t["summary_fallback"],
            )
            manager.store.restore(rec, int(t["refcount"]))
        for obj in state["sessions"]:
            s = Session(
                session_id=obj["session_id"],
                da=_load_da(obj["da"]),
                turn_refs=[bytes.fromhex(h) for h in obj["turn_refs"]],
                status=SessionStatus(obj["status"]),
                last_active=int(obj["last_active"]),
                answer_cache={bytes.fromhex(h): a for h, a in obj["answer_cache"].items()},
                turn_positions=[int(i) for i in obj["turn_positions"]],
                ancestor_id=obj["ancestor_id"],
                created_seq=int(obj["created_seq"]),
            )
            for m in obj["messages"]:
                s.append(Message.from_wire(m))
            manager.adopt(s)
        manager.next_session_seq = max(manager.next_session_seq, int(state["next_session_seq"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise StateError(f"malformed state: {exc}") from exc


def save_state(manager: SessionManager, path: str | os.PathLike) -> None:
    text = json.dumps(dump_state(manager), indent=1, sort_keys=True)
    tmp = Path(f"{os.fspath(path)}.tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def load_state(manager: SessionManager, path: str | os.PathLike) -> None:
    try:
        state = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise StateError(f"state file is not valid JSON: {exc}") from exc
    restore_state(manager, state)
