"""Deterministic stand-ins for the reasoning and memory agents.

Neither agent keeps state between calls: everything they know comes from the
prompt they are sent, so what they can do is decided entirely by what the
memory layers put in front of them.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass

from ..agents import ScriptedProvider
from .games import (
    DOMAIN,
    DOMAIN_INDEX,
    Rule,
    Triple,
    rule_pool,
    format_outcome,
    outcome_table,
    parse_outcome,
)

STRATEGY_PHRASE = "split the remaining candidate rules as evenly as possible"
STRATEGY_INSIGHT = (
    "strategy for sequential rule discovery games: probe extremes first and "
    f"{STRATEGY_PHRASE} with every probe"
)
RULE_DISCOVERY_QUERY = "strategy for sequential rule discovery games"

HEADER_RE = re.compile(
    r"\[game id=(?P<gid>[\w-]+) difficulty=(?P<difficulty>\w+) candidates=(?P<size>\d+) "
    r"round=(?P<round>\d+) "
    r"round_start=(?P<start>\d+) turn=(?P<turn>\d+)\]"
)
FEEDBACK_RE = re.compile(
    r"feedback\[round=(?P<round>\d+) probe_turn=(?P<pturn>\d+)\] probe "
    r"\((?P<a>\d),(?P<b>\d),(?P<c>\d)\): (?P<out>pos1:\w+ pos2:\w+ pos3:\w+)"
)
PROBE_RE = re.compile(r"^PROBE: \((\d),(\d),(\d)\)\s*$", re.M)
RULE_RE = re.compile(r"^RULE: ([\w-]+)\s*$", re.M)


def format_header(
    game_id: str, difficulty: str, size: int, round_no: int, round_start: int, turn: int
) -> str:
    return (
        f"[game id={game_id} difficulty={difficulty} candidates={size} round={round_no} "
        f"round_start={round_start} turn={turn}]"
    )


def format_feedback(round_no: int, probe_turn: int, probe: Triple, code: int) -> str:
    a, b, c = probe
    return f"feedback[round={round_no} probe_turn={probe_turn}] probe ({a},{b},{c}): {format_outcome(code)}"


def format_probe(probe: Triple) -> str:
    return "({},{},{})".format(*probe)


@dataclass(frozen=True)
class Observation:
    round_no: int
    probe_turn: int
    probe: Triple
    code: int


def observations(text: str) -> dict[tuple[int, int], Observation]:
    out: dict[tuple[int, int], Observation] = {}
    for m in FEEDBACK_RE.finditer(text):
        obs = Observation(
            int(m["round"]),
            int(m["pturn"]),
            (int(m["a"]), int(m["b"]), int(m["c"])),
            parse_outcome(m["out"]),
        )
        out.setdefault((obs.round_no, obs.probe_turn), obs)
    return out


def consistent(family: tuple[Rule, ...], obs: list[Observation]) -> list[Rule]:
    table = outcome_table()
    return [
        r
        for r in family
        if all(table[r.name][DOMAIN_INDEX[o.probe]] == o.code for o in obs)
    ]


def _groups(cands: list[Rule], i: int) -> Counter:
    table = outcome_table()
    return Counter(table[r.name][i] for r in cands)


def naive_probe(cands: list[Rule]) -> Triple:
    """First probe in lexicographic order that separates any two candidates."""
    for i, t in enumerate(DOMAIN):
        if len(_groups(cands, i)) > 1:
            return t
    return DOMAIN[0]


def split_probe(cands: list[Rule]) -> Triple:
    """Probe minimising the largest surviving group, then maximising the
    number of groups; earliest probe on ties."""
    best_key, best = None, DOMAIN[0]
    for i, t in enumerate(DOMAIN):
        g = _groups(cands, i)
        key = (max(g.values()), -len(g))
        if best_key is None or key < best_key:
            best_key, best = key, t
    return best


def full_information_turns(hidden: Rule, family: tuple[Rule, ...], use_split: bool) -> int:
    """Turns the oracle needs when it sees every observation (guess included)."""
    table = outcome_table()
    cands = list(family)
    turns = 0
    while True:
        turns += 1
        if len(cands) <= 1:
            return turns
        probe = split_probe(cands) if use_split else naive_probe(cands)
        code = table[hidden.name][DOMAIN_INDEX[probe]]
        cands = [r for r in cands if table[r.name][DOMAIN_INDEX[probe]] == code]


# -- reasoning agent --------------------------------------------------------

def _current_header(prompt: str) -> re.Match | None:
    headers = list(HEADER_RE.finditer(prompt))
    if not headers:
        return None
    return max(headers, key=lambda m: int(m["turn"]))


def reason(prompt: str) -> str:
    windowed = "context window" in prompt
    second = "This is the second context window" in prompt
    head = _current_header(prompt)
    if head is None:
        body = "I can only play rule-discovery games; no game header found.\nRULE: unknown"
        return f"SUFFICIENT\n{body}" if windowed else body
    round_no, start, turn = int(head["round"]), int(head["start"]), int(head["turn"])
    family = rule_pool()[: int(head["size"])]
    seen = {k: o for k, o in observations(prompt).items() if k[0] == round_no}
    needed = range(start, turn)
    missing = [t for t in needed if (round_no, t) not in seen]
    if windowed and not second and missing:
        return "NEED_TURNS: " + ", ".join(str(t + 1) for t in missing)
    obs = sorted(seen.values(), key=lambda o: o.probe_turn)
    cands = consistent(family, obs)
    use_split = STRATEGY_PHRASE in prompt
    body = _chain_of_thought(family, obs, cands, missing, use_split)
    return f"SUFFICIENT\n{body}" if windowed else body


def _chain_of_thought(
    family: tuple[Rule, ...],
    obs: list[Observation],
    cands: list[Rule],
    missing: list[int],
    use_split: bool,
) -> str:
    table = outcome_table()
    lines = ["Reasoning:"]
    lines.append(f"I have {len(obs)} observations for this rule and {len(family)} candidate rules.")
    for o in obs:
        lines.append(f"- at turn {o.probe_turn} I probed {format_probe(o.probe)} and saw {format_outcome(o.code).replace(':', ' ')}")
    if missing:
        lines.append("Some earlier results are not available to me: turns " + ", ".join(map(str, missing)) + ".")
    lines.append("Checking every candidate rule against what I have seen:")
    for r in family:
        bad = next((o for o in obs if table[r.name][DOMAIN_INDEX[o.probe]] != o.code), None)
        verdict = "still possible" if bad is None else f"ruled out by {format_probe(bad.probe)}"
        lines.append(f"- {r.name} ({r.family}): {verdict}")
    lines.append(f"Remaining candidates ({len(cands)}): " + ", ".join(r.name for r in cands) + ".")
    if len(cands) == 1:
        lines.append("Only one rule fits every observation.")
        lines.append(f"RULE: {cands[0].name}")
        return "\n".join(lines)
    if not cands:
        lines.append("No rule fits; I will name the first candidate.")
        lines.append(f"RULE: {family[0].name}")
        return "\n".join(lines)
    probe = split_probe(cands) if use_split else naive_probe(cands)
    groups = _groups(cands, DOMAIN_INDEX[probe])
    plan = "split the candidates as evenly as I can" if use_split else "take the first probe that separates any two candidates"
    lines.append(f"Plan: {plan}.")
    lines.append(
        f"Probe {format_probe(probe)} gives outcome groups "
        + ", ".join(f"{format_outcome(k).replace(':', ' ')}={v}" for k, v in sorted(groups.items()))
        + "."
    )
    lines.append(f"PROBE: {format_probe(probe)}")
    return "\n".join(lines)


# -- memory agent ------------------------------------------------------------

def _section(prompt: str, name: str, until: str | None = None) -> str:
    start = prompt.find(name + ":\n")
    if start < 0:
        return ""
    start += len(name) + 2
    end = prompt.find(until + ":\n", start) if until else -1
    return prompt[start:] if end < 0 else prompt[start:end]


def _names(names: list[str], cap: int = 16) -> str:
    shown = ", ".join(names[:cap])
    return shown + (f" and {len(names) - cap} more" if len(names) > cap else "")


def summarize(prompt: str) -> str:
    user = _section(prompt, "USER", "RESPONSE")
    response = _section(prompt, "RESPONSE")
    head = HEADER_RE.search(user)
    parts = []
    if head:
        parts.append(f"Turn {head['turn']} of round {head['round']} (difficulty {head['difficulty']}).")
    if "named correctly" in user:
        parts.append("The previous round was solved and a new hidden rule was dealt.")
    fb = FEEDBACK_RE.search(user)
    if fb:
        parts.append(f"The user reported {fb.group(0)}.")
    else:
        fam = re.search(r"one of the (\d+) rules of the (\w+) family", user)
        if fam:
            parts.append(
                f"No feedback yet in this round: the user asked for the hidden rule among the "
                f"{fam.group(1)} rules of the {fam.group(2)} family, probed with PROBE lines "
                "and named with a RULE line."
            )
        else:
            parts.append("No feedback yet in this round.")
    seen = re.findall(r"^- at turn (\d+) I probed (\(\d,\d,\d\)) and saw (.*)$", response, re.M)
    if seen:
        parts.append(
            "Observations the reasoner used: "
            + "; ".join(f"turn {t} {p} {o}" for t, p, o in seen) + "."
        )
    out = re.findall(r"^- ([\w-]+) \([\w-]+\): ruled out", response, re.M)
    if out:
        parts.append(f"Ruled out so far ({len(out)}): {_names(out)}.")
    rem = re.search(r"Remaining candidates \((\d+)\): (.*)\.$", response, re.M)
    if rem:
        parts.append(f"{rem.group(1)} candidate rules remained: {_names(rem.group(2).split(', '))}.")
    if m := re.search(r"^Probe .* gives outcome groups (.*)\.$", response, re.M):
        parts.append(f"Expected outcome groups: {m.group(1)}.")
    if m := PROBE_RE.search(response):
        parts.append(f"The reasoner chose probe ({m.group(1)},{m.group(2)},{m.group(3)}).")
    elif m := RULE_RE.search(response):
        probes = ", ".join(p for _, p, _ in seen) or "no probes"
        parts.append(
            f"The reasoner named the rule {m.group(1)} as the only candidate consistent "
            f"with the verdicts of this round ({probes})."
        )
    return " ".join(parts)


_NOTE_LINE = re.compile(r"^\[(n\d+)\] (.*)$", re.M)


def update_notes(prompt: str) -> str:
    notes = dict(_NOTE_LINE.findall(_section(prompt, "CURRENT NOTES", "NEW TURN SUMMARY")))
    summary = _section(prompt, "NEW TURN SUMMARY")
    fb = FEEDBACK_RE.search(summary)
    rnd = re.search(r"of round (\d+)", summary)
    if not rnd:
        return ""
    round_no = int(rnd.group(1))
    ops = []
    ledger_id = None
    for nid, text in notes.items():
        m = re.match(r"ledger round=(\d+):", text)
        if m and int(m.group(1)) == round_no:
            ledger_id = nid
        elif m:
            ops.append(f"RETIRE {nid}")
    if fb:
        entry = fb.group(0)
        if ledger_id is None:
            ops.append(f"ADD: ledger round={round_no}: {entry}")
        elif entry not in notes[ledger_id]:
            ops.append(f"REVISE {ledger_id}: {notes[ledger_id]}; {entry}")
    if "solved" in summary and not any("goal:" in t for t in notes.values()):
        ops.append("ADD: goal: keep naming hidden rules; each round starts a new ledger")
    return "\n".join(ops)


def rewrite(prompt: str) -> str:
    situation = _section(prompt, "SITUATION")
    if "hidden rule" in situation.lower():
        return RULE_DISCOVERY_QUERY
    return situation.strip().splitlines()[0] if situation.strip() else ""


def distill(prompt: str) -> str:
    summaries = _section(prompt, "TURN SUMMARIES")
    lines = []
    if "named the rule" in summaries or "was solved" in summaries:
        lines.append(f"KEEP: {STRATEGY_INSIGHT}")
    lines.append("DROP")
    return "\n".join(lines)


def merge(prompt: str) -> str:
    a = re.search(r"^A: (.*)$", prompt, re.M)
    b = re.search(r"^B: (.*)$", prompt, re.M)
    if not a:
        return ""
    if not b or set(b.group(1).lower().split()) <= set(a.group(1).lower().split()):
        return a.group(1)
    return f"{a.group(1)}; {b.group(1)}"


def oracle_reasoner() -> ScriptedProvider:
    return ScriptedProvider(default_response=reason)


def oracle_memory_agent() -> ScriptedProvider:
    p = ScriptedProvider(default_response="")
    p.add_rule("TASK: summarize-turn", summarize)
    p.add_rule("TASK: update-notes", update_notes)
    p.add_rule("TASK: rewrite-query", rewrite)
    p.add_rule("TASK: distill-session", distill)
    p.add_rule("TASK: merge-memories", merge)
    return p
