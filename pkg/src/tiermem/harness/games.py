"""Rule-discovery games over digit triples.

A hidden rule accepts or rejects triples of digits 1..5. Probing a triple
returns one verdict per rotation: ``pos1`` is the probe itself, ``pos2`` the
probe rotated to start at its second digit, ``pos3`` at its third. The player
knows the candidate family and must name the hidden rule.
"""

from __future__ import annotations

import enum
import itertools
import random
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

Triple = tuple[int, int, int]

DIGITS = range(1, 6)
DOMAIN: tuple[Triple, ...] = tuple(itertools.product(DIGITS, repeat=3))

FAMILIES = ("all-increasing", "sum-divisible-by-m", "arithmetic-progression", "all-equal-parity")


class Difficulty(str, enum.Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"


FAMILY_SIZE = {Difficulty.EASY: 4, Difficulty.MEDIUM: 16, Difficulty.HARD: 64}
MIN_ACCEPT, MAX_ACCEPT = 0.1, 0.9
DEFAULT_MAX_TURNS = {Difficulty.EASY: 8, Difficulty.MEDIUM: 12, Difficulty.HARD: 16}


@dataclass(frozen=True)
class Rule:
    name: str
    family: str
    predicate: Callable[[Triple], bool]

    def __repr__(self) -> str:
        return f"Rule({self.name})"


def rotations(t: Triple) -> tuple[Triple, Triple, Triple]:
    return t, (t[1], t[2], t[0]), (t[2], t[0], t[1])


def outcome(rule: Rule, probe: Triple) -> int:
    """3-bit verdict; bit k set when rotation k is accepted."""
    return sum(1 << k for k, rot in enumerate(rotations(probe)) if rule.predicate(rot))


def format_outcome(code: int) -> str:
    return " ".join(f"pos{k + 1}:{'match' if code >> k & 1 else 'miss'}" for k in range(3))


def parse_outcome(text: str) -> int:
    code = 0
    for k, word in enumerate(text.split()):
        if word.endswith(":match"):
            code |= 1 << k
    return code


_POS = {0: "first", 1: "middle", 2: "last"}


def _d1(t: Triple) -> int:
    return t[1] - t[0]


def _d2(t: Triple) -> int:
    return t[2] - t[1]


def _ordering_rules() -> list[Rule]:
    fam = "all-increasing"
    out = []
    for i, j in ((0, 1), (1, 2), (0, 2)):
        a, b = _POS[i], _POS[j]
        out.append(Rule(f"{a}-below-{b}", fam, lambda t, i=i, j=j: t[i] < t[j]))
        out.append(Rule(f"{a}-not-above-{b}", fam, lambda t, i=i, j=j: t[i] <= t[j]))
    out.append(Rule("non-decreasing", fam, lambda t: t[0] <= t[1] <= t[2]))
    out.append(Rule("non-increasing", fam, lambda t: t[0] >= t[1] >= t[2]))
    for k in range(3):
        out.append(Rule(f"{_POS[k]}-is-largest", fam, lambda t, k=k: t[k] == max(t)))
        out.append(Rule(f"{_POS[k]}-is-smallest", fam, lambda t, k=k: t[k] == min(t)))
    out.append(Rule("increasing-overall", fam, lambda t: t[0] < t[2] and t[0] <= t[1]))
    out.append(Rule("rises-at-least-2", fam, lambda t: t[2] - t[0] >= 2))
    out.append(Rule("falls-at-least-2", fam, lambda t: t[0] - t[2] >= 2))
    out.append(Rule("strictly-increasing", fam, lambda t: t[0] < t[1] < t[2]))
    return out


def _sum_rules() -> list[Rule]:
    fam = "sum-divisible-by-m"
    out = []
    for m in range(2, 9):
        for r in range(m):
            out.append(Rule(f"sum-mod-{m}-is-{r}", fam, lambda t, m=m, r=r: sum(t) % m == r))
    for m in (2, 3):
        for r in range(m):
            out.append(
                Rule(f"pair-sum-mod-{m}-is-{r}", fam, lambda t, m=m, r=r: (t[0] + t[1]) % m == r)
            )
    return out


def _progression_rules() -> list[Rule]:
    fam = "arithmetic-progression"
    out = [
        Rule("any-progression", fam, lambda t: _d1(t) == _d2(t)),
        Rule("not-a-progression", fam, lambda t: _d1(t) != _d2(t)),
    ]
    for c in (1, -1, 2, -2, 3, -3):
        out.append(Rule(f"step-change-{c}", fam, lambda t, c=c: _d2(t) - _d1(t) == c))
    for c in (1, 2, 3):
        out.append(Rule(f"step-change-within-{c}", fam, lambda t, c=c: abs(_d2(t) - _d1(t)) <= c))
    out += [
        Rule("step-change-positive", fam, lambda t: _d2(t) - _d1(t) > 0),
        Rule("step-change-negative", fam, lambda t: _d2(t) - _d1(t) < 0),
        Rule("step-change-even", fam, lambda t: (_d2(t) - _d1(t)) % 2 == 0),
    ]
    for c in (1, 2):
        out.append(Rule(f"first-step-within-{c}", fam, lambda t, c=c: abs(_d1(t)) <= c))
        out.append(Rule(f"second-step-within-{c}", fam, lambda t, c=c: abs(_d2(t)) <= c))
    out += [
        Rule("steps-same-sign", fam, lambda t: _d1(t) * _d2(t) > 0),
        Rule("steps-opposite-sign", fam, lambda t: _d1(t) * _d2(t) < 0),
        Rule("steps-same-size", fam, lambda t: abs(_d1(t)) == abs(_d2(t))),
        Rule("step-change-odd", fam, lambda t: (_d2(t) - _d1(t)) % 2 == 1),
        Rule("first-step-within-3", fam, lambda t: abs(_d1(t)) <= 3),
        Rule("second-step-within-3", fam, lambda t: abs(_d2(t)) <= 3),
        Rule("total-span-within-2", fam, lambda t: abs(t[2] - t[0]) <= 2),
    ]
    return out


def _odd(t: Triple) -> int:
    return sum(x % 2 for x in t)


def _parity_rules() -> list[Rule]:
    fam = "all-equal-parity"
    out = [Rule("all-same-parity", fam, lambda t: len({x % 2 for x in t}) == 1)]
    for k in (1, 2):
        out.append(Rule(f"exactly-{k}-odd", fam, lambda t, k=k: _odd(t) == k))
    for i, j in ((0, 1), (1, 2), (0, 2)):
        out.append(
            Rule(f"positions-{i + 1}{j + 1}-same-parity", fam, lambda t, i=i, j=j: t[i] % 2 == t[j] % 2)
        )
    for k in (1, 2):
        out.append(Rule(f"at-least-{k}-odd", fam, lambda t, k=k: _odd(t) >= k))
    out.append(Rule("at-most-1-odd", fam, lambda t: _odd(t) <= 1))
    for i in range(3):
        out.append(Rule(f"position-{i + 1}-odd", fam, lambda t, i=i: t[i] % 2 == 1))
    for pattern in itertools.product((0, 1), repeat=3):
        name = "parity-" + "".join("eo"[p] for p in pattern)
        out.append(Rule(name, fam, lambda t, p=pattern: tuple(x % 2 for x in t) == p))
    for i, j in ((0, 1), (1, 2), (0, 2)):
        out.append(
            Rule(
                f"positions-{i + 1}{j + 1}-both-odd",
                fam,
                lambda t, i=i, j=j: t[i] % 2 == 1 and t[j] % 2 == 1,
            )
        )
    return out


def _table(rule: Rule) -> tuple[int, ...]:
    return tuple(outcome(rule, t) for t in DOMAIN)


@lru_cache(maxsize=None)
def rule_pool() -> tuple[Rule, ...]:
    """64 rules, 16 per family, interleaved so every prefix of length 4k
    holds k rules from each family.

    Rules are pairwise distinguishable and accept between 10% and 90% of
    rotated probes; very sparse rules would need one probe each to find.
    """
    per_family = [_ordering_rules(), _sum_rules(), _progression_rules(), _parity_rules()]
    seen: set[tuple[int, ...]] = set()
    picked: list[list[Rule]] = [[] for _ in per_family]
    for fam_rules, bucket in zip(per_family, picked):
        for rule in fam_rules:
            table = _table(rule)
            rate = sum(bin(c).count("1") for c in table) / (3 * len(DOMAIN))
            if table in seen or not MIN_ACCEPT <= rate <= MAX_ACCEPT:
                continue
            seen.add(table)
            bucket.append(rule)
            if len(bucket) == 16:
                break
    for fam, bucket in zip(FAMILIES, picked):
        if len(bucket) < 16:
            raise RuntimeError(f"family {fam} has only {len(bucket)} distinct rules")
    return tuple(r for group in zip(*picked) for r in group)


def candidate_family(difficulty: Difficulty | str) -> tuple[Rule, ...]:
    return rule_pool()[: FAMILY_SIZE[Difficulty(difficulty)]]


def rule_by_name(name: str) -> Rule:
    for r in rule_pool():
        if r.name == name:
            return r
    raise KeyError(name)


@lru_cache(maxsize=None)
def outcome_table() -> dict[str, tuple[int, ...]]:
    return {r.name: _table(r) for r in rule_pool()}


DOMAIN_INDEX = {t: i for i, t in enumerate(DOMAIN)}


@dataclass(frozen=True)
class Game:
    difficulty: Difficulty
    seed: int
    max_turns: int
    family: str = "mixed"
    rounds: int | None = 1  # None: keep dealing new rules until max_turns
    family_size: int | None = None  # overrides the difficulty's family size

    def __post_init__(self) -> None:
        object.__setattr__(self, "difficulty", Difficulty(self.difficulty))
        if self.family != "mixed" and self.family not in FAMILIES:
            raise ValueError(f"unknown rule family {self.family!r}")
        if self.max_turns < 1:
            raise ValueError("max_turns must be positive")
        if self.family_size is not None and not 1 <= self.family_size <= len(rule_pool()):
            raise ValueError(f"family_size must be in 1..{len(rule_pool())}")

    @property
    def candidates(self) -> tuple[Rule, ...]:
        if self.family_size is not None:
            return rule_pool()[: self.family_size]
        return candidate_family(self.difficulty)

    def hidden_rule(self, round_no: int = 1) -> Rule:
        pool = [r for r in self.candidates if self.family in ("mixed", r.family)]
        rng = random.Random(f"{self.difficulty.value}:{self.family}:{self.seed}:{round_no}")
        return pool[rng.randrange(len(pool))]

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "seed": self.seed,
            "difficulty": self.difficulty.value,
            "max_turns": self.max_turns,
            "rounds": self.rounds,
            "family_size": self.family_size,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Game":
        return cls(
            difficulty=Difficulty(obj["difficulty"]),
            seed=int(obj["seed"]),
            max_turns=int(obj["max_turns"]),
            family=obj.get("family", "mixed"),
            rounds=obj.get("rounds", 1),
            family_size=obj.get("family_size"),
        )
