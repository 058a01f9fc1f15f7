"""Play games against an engine and record per-turn prompt sizes."""

from __future__ import annotations

import csv
import json
import statistics
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from ..agents import ChatProvider, CompletionParams, render_prompt
from ..core import Message, estimate_tokens
from ..engine import ChatResult, Engine, EngineSettings
from ..foa import PREAMBLE_TEMPLATE, TurnFailed
from ..ltm import LtmStore
from .games import DEFAULT_MAX_TURNS, Difficulty, Game, outcome
from .oracle import (
    PROBE_RE,
    RULE_RE,
    format_feedback,
    format_header,
    oracle_memory_agent,
    oracle_reasoner,
)

GAME_RULES = (
    "Game rules: the user hides a rule that accepts or rejects triples of digits "
    "1 to 5. Each round the hidden rule comes from a known family of candidate "
    "rules (4 for easy, 16 for medium, 64 for hard games) built from four kinds: "
    "orderings between positions, sums modulo small numbers, arithmetic "
    "progressions and parity counts. To probe, reply with a line PROBE: (a,b,c). "
    "The user then reports one verdict per rotation of the probe: pos1 is the "
    "triple as written, pos2 starts at its second digit and pos3 at its third, "
    "each either match or miss. Every probe costs one turn. When exactly one "
    "candidate fits every verdict of the round, reply with a line RULE: <name>. "
    "A correct name ends the round and a new hidden rule is dealt. Only "
    "verdicts from the current round count, so keep track of every probe and "
    "verdict since the round started; a rule is ruled out as soon as a single "
    "verdict disagrees with it. Candidate names describe the rule, for example "
    "sum-mod-3-is-2 accepts triples whose digit sum leaves remainder 2 mod 3. "
    "Reading a verdict: if the user reports pos1:match pos2:miss pos3:miss for "
    "probe (1,3,2), the hidden rule accepts (1,3,2) and rejects both (3,2,1) and "
    "(2,1,3). Rotations of a constant triple such as (4,4,4) are all the same "
    "triple, so its three verdicts always agree. Rules that only look at the "
    "digit sum or at parity counts give the same verdict for all three "
    "rotations, while ordering and progression rules can tell rotations apart. "
    "Names are unique within a family and must be written exactly as listed."
)
GAME_PREAMBLE = f"{PREAMBLE_TEMPLATE}\n{GAME_RULES}"
BASELINE_PREAMBLE = (
    "You are a helpful assistant. The whole conversation so far follows. "
    f"Answer the last user message.\n{GAME_RULES}"
)
CSV_FIELDS = ("mode", "game_seed", "turn", "prompt_tokens")


class ChatEngine(Protocol):
    def chat(self, messages: Sequence[Message]) -> ChatResult: ...


@dataclass(frozen=True)
class AblationConfig:
    name: str
    foa_enabled: bool = True
    da_enabled: bool = True
    ltm_enabled: bool = True
    baseline_mode: bool = False

    def __post_init__(self) -> None:
        if self.da_enabled and not self.foa_enabled:
            raise ValueError("da requires foa")
        if self.ltm_enabled and not self.da_enabled:
            raise ValueError("ltm requires da")
        if self.baseline_mode == self.foa_enabled:
            raise ValueError("baseline_mode is exactly the configuration without foa")

    @property
    def mode(self) -> str:
        return "baseline" if self.baseline_mode else "cogmem"


ABLATIONS = {
    "foa": AblationConfig("foa", da_enabled=False, ltm_enabled=False),
    "foa_da": AblationConfig("foa_da", ltm_enabled=False),
    "foa_da_ltm": AblationConfig("foa_da_ltm"),
    "baseline": AblationConfig(
        "baseline", foa_enabled=False, da_enabled=False, ltm_enabled=False, baseline_mode=True
    ),
}


class BaselineEngine:
    """Full-history prompting with no memory layers: one call per turn."""

    def __init__(self, reasoning_agent: ChatProvider, params: CompletionParams | None = None) -> None:
        self.reasoning_agent = reasoning_agent
        self.params = params or CompletionParams()
        self.window_log: list[tuple[str, int, str, int]] = []

    def chat(self, messages: Sequence[Message]) -> ChatResult:
        prompt = [Message.user(BASELINE_PREAMBLE), *messages]
        completion = self.reasoning_agent.complete(prompt, self.params)
        tokens = estimate_tokens(render_prompt(prompt))
        turn = sum(1 for m in messages if m.role.value == "user")
        return ChatResult(completion.text, "full-history", "fresh", 1, tokens, turn)

    def expire_all(self):
        return None

    def close(self) -> None:
        pass


def make_engine(
    config: AblationConfig,
    *,
    budget_tokens: int = 2048,
    ltm: LtmStore | None = None,
    reasoning_agent: ChatProvider | None = None,
    memory_agent: ChatProvider | None = None,
    async_updates: bool = True,
) -> Engine | BaselineEngine:
    reasoning_agent = reasoning_agent or oracle_reasoner()
    if config.baseline_mode:
        return BaselineEngine(reasoning_agent)
    settings = EngineSettings(
        budget_tokens=budget_tokens,
        da_enabled=config.da_enabled,
        ltm_enabled=config.ltm_enabled,
        async_updates=async_updates,
        preamble=GAME_PREAMBLE,
    )
    return Engine(reasoning_agent, memory_agent or oracle_memory_agent(), settings, ltm)


@dataclass
class GameResult:
    game: Game
    solved: bool = False
    turns_used: int = 0
    rounds_solved: int = 0
    first_round_turns: int | None = None
    prompt_tokens: list[int] = field(default_factory=list)
    windows_used: list[int] = field(default_factory=list)
    failed_turn: int | None = None


def _intro(game: Game, round_no: int) -> str:
    n = len(game.candidates)
    lead = "The previous rule was named correctly. A new round starts. " if round_no > 1 else ""
    return (
        f"{lead}Guess the hidden rule. It accepts or rejects triples of digits 1-5 and is "
        f"one of the {n} rules of the {game.difficulty.value} family. Probe a triple by "
        "replying PROBE: (a,b,c) and I will report a match or miss for each rotation. "
        "Name the rule by replying RULE: <name>."
    )


def play_game(engine: ChatEngine, game: Game, game_id: str | None = None) -> GameResult:
    gid = game_id or f"{game.difficulty.value}-{game.seed}"
    result = GameResult(game)
    messages: list[Message] = []
    round_no, round_start = 1, 1
    body = _intro(game, 1)
    hidden = game.hidden_rule(1)
    for turn in range(1, game.max_turns + 1):
        header = format_header(gid, game.difficulty.value, len(game.candidates), round_no, round_start, turn)
        request = [*messages, Message.user(f"{header} {body}")]
        try:
            res = engine.chat(request)
        except TurnFailed:
            result.failed_turn = turn
            result.turns_used = turn
            return result
        result.turns_used = turn
        result.prompt_tokens.append(res.prompt_tokens)
        result.windows_used.append(res.windows_used)
        messages = [*request, Message.assistant(res.answer)]
        if m := RULE_RE.search(res.answer):
            if m.group(1) == hidden.name:
                result.rounds_solved += 1
                if result.first_round_turns is None:
                    result.first_round_turns = turn
                if game.rounds is not None and result.rounds_solved >= game.rounds:
                    result.solved = True
                    return result
                round_no, round_start = round_no + 1, turn + 1
                hidden = game.hidden_rule(round_no)
                body = _intro(game, round_no)
            else:
                body = f"{m.group(1)} is not the hidden rule. Keep probing."
        elif m := PROBE_RE.search(res.answer):
            probe = (int(m.group(1)), int(m.group(2)), int(m.group(3)))
            body = format_feedback(round_no, turn, probe, outcome(hidden, probe)) + "."
        else:
            body = "Reply with PROBE: (a,b,c) or RULE: <name>."
    return result


def make_games(
    n_per_difficulty: int,
    seed: int = 0,
    *,
    max_turns: int | None = None,
    rounds: int | None = 1,
    difficulties: Iterable[Difficulty] = tuple(Difficulty),
) -> list[Game]:
    games, k = [], 0
    for d in difficulties:
        for _ in range(n_per_difficulty):
            games.append(Game(d, seed + k, max_turns or DEFAULT_MAX_TURNS[d], rounds=rounds))
            k += 1
    return games


def load_scenarios(path: str | Path) -> list[Game]:
    """JSON list of game objects (difficulty, seed, max_turns, optional family/rounds)."""
    data = json.loads(Path(path).read_text())
    return [Game.from_dict(obj) for obj in data]


@dataclass
class SuiteReport:
    mode: str
    config: str
    results: list[GameResult]
    window_log: list[tuple[str, int, str, int]] = field(default_factory=list)
    csv_path: Path | None = None

    @property
    def accuracy(self) -> float:
        return sum(r.solved for r in self.results) / len(self.results) if self.results else 0.0

    def accuracy_by_difficulty(self) -> dict[str, float]:
        by: dict[str, list[bool]] = defaultdict(list)
        for r in self.results:
            by[r.game.difficulty.value].append(r.solved)
        return {d: sum(v) / len(v) for d, v in by.items()}

    def mean_tokens_by_turn(self) -> dict[int, float]:
        by: dict[int, list[int]] = defaultdict(list)
        for r in self.results:
            for t, tok in enumerate(r.prompt_tokens, 1):
                by[t].append(tok)
        return {t: statistics.fmean(v) for t, v in sorted(by.items())}

    @property
    def mean_turns(self) -> float:
        return statistics.fmean(r.turns_used for r in self.results) if self.results else 0.0

    @property
    def max_window_tokens(self) -> int:
        return max((w[3] for w in self.window_log), default=0)

    def rows(self) -> list[dict]:
        return [
            {"mode": self.mode, "game_seed": r.game.seed, "turn": t, "prompt_tokens": tok}
            for r in self.results
            for t, tok in enumerate(r.prompt_tokens, 1)
        ]


def write_csv(rows: Iterable[dict], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        w.writeheader()
        w.writerows(rows)
    return path


def read_csv(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return [
            {**row, "game_seed": int(row["game_seed"]), "turn": int(row["turn"]),
             "prompt_tokens": int(row["prompt_tokens"])}
            for row in csv.DictReader(fh)
        ]


def run_suite(
    games: Sequence[Game],
    config: AblationConfig,
    *,
    budget_tokens: int = 2048,
    csv_path: str | Path | None = None,
    engine: ChatEngine | None = None,
) -> SuiteReport:
    own = engine is None
    engine = engine or make_engine(config, budget_tokens=budget_tokens)
    try:
        results = [play_game(engine, g) for g in games]
    finally:
        if own:
            engine.close()
    report = SuiteReport(config.mode, config.name, results, list(getattr(engine, "window_log", [])))
    if csv_path is not None:
        report.csv_path = write_csv(report.rows(), csv_path)
    return report
