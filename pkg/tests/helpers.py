"""Scripted agents and engine factories shared by the tests."""

from __future__ import annotations

import re

from tiermem.agents import ScriptedProvider
from tiermem.core import Message
from tiermem.engine import Engine, EngineSettings

_INPUT_RE = re.compile(r"^USER INPUT: (.*)$", re.M)


def echo_reasoner() -> ScriptedProvider:
    """Answers every window with a function of the current user input."""

    def reply(prompt: str) -> str:
        m = _INPUT_RE.search(prompt)
        return f"SUFFICIENT\nanswer to {m.group(1) if m else '?'}"

    return ScriptedProvider(default_response=reply)


def summarizing_agent(keep: str | None = None) -> ScriptedProvider:
    """Summaries name the user input; optionally keeps one note per turn and
    distills a fixed insight."""

    def summary(prompt: str) -> str:
        user = prompt.split("USER:\n", 1)[1].split("\nRESPONSE:\n", 1)[0]
        return f"summary of {user}"

    p = ScriptedProvider(default_response="")
    p.add_rule("TASK: summarize-turn", summary)
    p.add_rule("TASK: update-notes", lambda prompt: "ADD: " + prompt.rsplit("NEW TURN SUMMARY:\n", 1)[1])
    p.add_rule("TASK: rewrite-query", lambda prompt: prompt.split("SITUATION:\n", 1)[1].splitlines()[0])
    if keep:
        p.add_rule("TASK: distill-session", f"KEEP: {keep}")
    return p


def make_engine(reasoner=None, memory=None, **settings) -> Engine:
    settings.setdefault("async_updates", False)
    return Engine(reasoner or echo_reasoner(), memory or summarizing_agent(), EngineSettings(**settings))


def dialogue(*contents: str) -> list[Message]:
    """Alternating user/assistant messages starting with the user."""
    return [Message.user(c) if i % 2 == 0 else Message.assistant(c) for i, c in enumerate(contents)]


def converse(engine: Engine, *user_inputs: str, prefix: list[Message] | None = None) -> list[Message]:
    msgs = list(prefix or [])
    for text in user_inputs:
        msgs.append(Message.user(text))
        res = engine.chat(msgs)
        msgs.append(Message.assistant(res.answer))
    return msgs
