"""Token-per-turn figures for benchmark CSVs."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Iterable, Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def mean_curves(rows: Iterable[dict]) -> dict[str, dict[int, float]]:
    """mode -> turn -> mean prompt tokens over games."""
    acc: dict[str, dict[int, list[int]]] = defaultdict(lambda: defaultdict(list))
    for row in rows:
        acc[row["mode"]][int(row["turn"])].append(int(row["prompt_tokens"]))
    return {
        mode: {t: sum(v) / len(v) for t, v in sorted(turns.items())}
        for mode, turns in acc.items()
    }


def plot_token_curves(
    curves: Mapping[str, Mapping[int, float]],
    path: str | Path,
    budget: int | None = None,
    title: str = "Prompt tokens per turn",
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(7, 4))
    for mode, curve in curves.items():
        turns = sorted(curve)
        ax.plot(turns, [curve[t] for t in turns], marker="o", markersize=3, label=mode)
    if budget is not None:
        ax.axhline(budget, color="grey", linestyle="--", linewidth=1, label=f"budget {budget}")
    ax.set_xlabel("turn")
    ax.set_ylabel("mean prompt tokens")
    ax.set_title(title)
    if curves or budget is not None:
        ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
