"""Crafted scenario suite for comparing memory configurations.

Two groups of games:

* budget-starved: medium and hard games played under a small context budget,
  where earlier feedback no longer fits in full and must survive as notes;
* two-phase: hard games played once with a generous turn limit, after which
  every session expires (so the long-term store can distill them), then
  replayed under a turn limit that only a good probing strategy meets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .games import Difficulty, Game, candidate_family
from .oracle import full_information_turns
from .runner import ABLATIONS, AblationConfig, SuiteReport, make_engine, play_game

STARVED_BUDGET = 1024
PHASE1_MAX_TURNS = 16
PHASE2_MAX_TURNS = 5
ORDER = ("foa", "foa_da", "foa_da_ltm")


@dataclass
class CraftedSuite:
    starved: list[Game]
    two_phase_seeds: list[int]
    starved_budget: int = STARVED_BUDGET
    phase1_max_turns: int = PHASE1_MAX_TURNS
    phase2_max_turns: int = PHASE2_MAX_TURNS

    def phase_games(self, phase: int) -> list[Game]:
        limit = self.phase1_max_turns if phase == 1 else self.phase2_max_turns
        return [Game(Difficulty.HARD, s, limit) for s in self.two_phase_seeds]

    def to_dict(self) -> dict:
        return {
            "starved": [g.to_dict() for g in self.starved],
            "two_phase_seeds": self.two_phase_seeds,
            "starved_budget": self.starved_budget,
            "phase1_max_turns": self.phase1_max_turns,
            "phase2_max_turns": self.phase2_max_turns,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "CraftedSuite":
        return cls(
            starved=[Game.from_dict(g) for g in obj["starved"]],
            two_phase_seeds=[int(s) for s in obj["two_phase_seeds"]],
            starved_budget=int(obj.get("starved_budget", STARVED_BUDGET)),
            phase1_max_turns=int(obj.get("phase1_max_turns", PHASE1_MAX_TURNS)),
            phase2_max_turns=int(obj.get("phase2_max_turns", PHASE2_MAX_TURNS)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "CraftedSuite":
        return cls.from_dict(json.loads(Path(path).read_text()))


def two_phase_seeds(n: int, seed: int = 0, tight: int = PHASE2_MAX_TURNS) -> list[int]:
    """Hard-game seeds the naive prober cannot finish within ``tight`` turns
    but the splitting prober can, both with full information."""
    family = candidate_family(Difficulty.HARD)
    out, s = [], seed
    while len(out) < n:
        hidden = Game(Difficulty.HARD, s, tight).hidden_rule(1)
        naive = full_information_turns(hidden, family, use_split=False)
        split = full_information_turns(hidden, family, use_split=True)
        if naive > tight >= split:
            out.append(s)
        s += 1
    return out


def crafted_suite(n: int = 6, seed: int = 0) -> CraftedSuite:
    starved = [Game(d, seed + i, 12) for d in (Difficulty.MEDIUM, Difficulty.HARD) for i in range(n)]
    return CraftedSuite(starved, two_phase_seeds(n, seed + 1000))


@dataclass
class AblationResult:
    config: str
    starved: SuiteReport
    phase1: SuiteReport
    phase2: SuiteReport

    @property
    def reports(self) -> list[SuiteReport]:
        return [self.starved, self.phase1, self.phase2]

    @property
    def accuracy(self) -> float:
        games = [r for rep in self.reports for r in rep.results]
        return sum(r.solved for r in games) / len(games)

    @property
    def windows_used(self) -> list[int]:
        return [w for rep in self.reports for r in rep.results for w in r.windows_used]


@dataclass
class AblationReport:
    results: dict[str, AblationResult] = field(default_factory=dict)

    def accuracies(self) -> dict[str, float]:
        return {k: v.accuracy for k, v in self.results.items()}

    def table(self) -> list[dict]:
        return [
            {
                "config": name,
                "overall": round(res.accuracy, 3),
                "starved": round(res.starved.accuracy, 3),
                "phase1": round(res.phase1.accuracy, 3),
                "phase2": round(res.phase2.accuracy, 3),
                "phase1_mean_turns": round(res.phase1.mean_turns, 2),
                "phase2_mean_turns": round(res.phase2.mean_turns, 2),
            }
            for name, res in self.results.items()
        ]


def run_config(suite: CraftedSuite, config: AblationConfig) -> AblationResult:
    with make_engine(config, budget_tokens=suite.starved_budget) as eng:
        starved = [play_game(eng, g, f"starved-{g.difficulty.value}-{g.seed}") for g in suite.starved]
        starved_rep = SuiteReport(config.mode, config.name, starved, list(eng.window_log))
    with make_engine(config) as eng:
        p1 = [play_game(eng, g, f"p1-{g.seed}") for g in suite.phase_games(1)]
        mark = len(eng.window_log)
        eng.expire_all()
        p2 = [play_game(eng, g, f"p2-{g.seed}") for g in suite.phase_games(2)]
        p1_rep = SuiteReport(config.mode, config.name, p1, eng.window_log[:mark])
        p2_rep = SuiteReport(config.mode, config.name, p2, eng.window_log[mark:])
    return AblationResult(config.name, starved_rep, p1_rep, p2_rep)


def run_ablation(suite: CraftedSuite | None = None, configs=ORDER) -> AblationReport:
    suite = suite or crafted_suite()
    report = AblationReport()
    for name in configs:
        report.results[name] = run_config(suite, ABLATIONS[name])
    return report
