import threading
import time

import pytest

from tiermem.agents import ScriptedProvider
from tiermem.core import Message
from tiermem.engine import Engine, EngineSettings
from tiermem.foa import TurnFailed
from tiermem.ltm import LtmStore

from helpers import converse, dialogue, echo_reasoner, make_engine, summarizing_agent


def test_settings_require_da_for_ltm():
    with pytest.raises(ValueError):
        EngineSettings(da_enabled=False, ltm_enabled=True)


def test_seeded_memories_reach_first_window():
    ltm = LtmStore()
    ltm.add("when guessing rules, probe the extremes first")
    eng = Engine(echo_reasoner(), summarizing_agent(), EngineSettings(async_updates=False), ltm)
    converse(eng, "guessing rules: probe the extremes")
    first_prompt = eng.reasoning_agent.transcript[0].prompt
    assert "MEMORY: when guessing rules, probe the extremes first" in first_prompt
    assert eng.manager.sessions["s1"].da.seeded_memories[0].entry_id == "m1"
    assert ltm.get("m1").use_count == 1


def test_foa_only_mode_uses_fallback_summaries():
    memory = summarizing_agent()
    eng = make_engine(memory=memory, da_enabled=False, ltm_enabled=False)
    converse(eng, "first question", "second question")
    assert memory.calls == 0
    s = eng.manager.sessions["s1"]
    assert s.da.turn_summaries[0] == (1, "answer to first question")
    assert s.da.notes == ()
    records = eng.manager.turn_records(s)
    assert records[1].summary_fallback


def test_summaries_and_notes_flow_into_next_window():
    eng = make_engine()
    converse(eng, "alpha", "beta")
    second = eng.reasoning_agent.transcript[-1].prompt
    assert "[turn 1] summary of alpha" in second
    assert "NOTE: summary of alpha" in second


def test_turn_failure_leaves_session_extendable():
    mode = {"bad": False}

    def reply(prompt):
        if mode["bad"]:
            return "NEED_TURNS: 1"
        return echo_reasoner().default_response(prompt)

    eng = make_engine(reasoner=ScriptedProvider(default_response=reply))
    msgs = converse(eng, "one")
    before = eng.manager.sessions["s1"]
    snapshot = (before.message_count, list(before.turn_refs), before.da)
    mode["bad"] = True
    with pytest.raises(TurnFailed):
        eng.chat(msgs + [Message.user("two")])
    assert (before.message_count, list(before.turn_refs), before.da) == snapshot
    mode["bad"] = False
    res = eng.chat(msgs + [Message.user("two")])
    assert res.resolution == "extend" and res.session_id == "s1" and res.turn_id == 2


def test_expiry_distills_into_ltm():
    eng = make_engine(memory=summarizing_agent(keep="split candidates evenly when probing"), ttl_ticks=3)
    converse(eng, "play a game")
    eng.expire_all()
    assert not eng.manager.sessions
    assert [e.content for e in eng.ltm.live_entries()] == ["split candidates evenly when probing"]
    assert eng.integration_reports[-1].added == 1
    assert [e.name for e in eng.events].count("ltm_review") == 1


def test_window_log_within_budget():
    eng = make_engine(budget_tokens=600)
    converse(eng, *[f"question number {i} " + "pad " * 20 for i in range(12)])
    assert len(eng.window_log) >= 12 and all(t <= 600 for *_, t in eng.window_log)


def test_async_updates_honour_barrier():
    slow = summarizing_agent()
    inner = slow.complete

    def delayed(messages, params=None):
        time.sleep(0.002)
        return inner(messages, params)

    slow.complete = delayed
    eng = make_engine(memory=slow, async_updates=True)
    converse(eng, *[f"q{i}" for i in range(15)])
    eng.quiesce()
    events = [(e.name, e.turn_id) for e in eng.events if e.session_id == "s1"]
    for t in range(1, 15):
        assert events.index(("apply_turn_update", t)) < events.index(("assemble_first_window", t + 1))
    eng.close()


def test_concurrent_identical_requests_single_flight():
    eng = make_engine(async_updates=True)
    msgs = converse(eng, "shared start")
    results = []

    def worker(i):
        results.append(eng.chat(msgs + [Message.user(f"branch {i % 2}")]))

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    eng.quiesce()
    answers = {r.answer for r in results}
    assert answers == {"answer to branch 0", "answer to branch 1"}
    # each distinct request was answered by the reasoner exactly once
    assert eng.reasoning_agent.calls == 3
    eng.close()


def test_reuse_of_answer_from_preloaded_request():
    eng = make_engine()
    eng.chat(dialogue("a", "b", "c"))
    assert eng.chat(dialogue("a", "b", "c")).resolution == "reuse"
