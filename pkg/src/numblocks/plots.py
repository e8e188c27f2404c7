"""Matplotlib figure rendering for run reports (SVG output)."""
from __future__ import annotations

from typing import Dict, List, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def save_curve_plot(path: str, curves: Dict[int, List]) -> None:
    """Learning curve; mean line with a 66% CI band when the seeds share a
    frame grid, one line per seed otherwise."""
    from .harness import aggregate_seeds

    fig, ax = plt.subplots(figsize=(7, 4.5))
    aligned = None
    if len(curves) >= 2:
        try:
            aligned = aggregate_seeds(curves)
        except ValueError:
            aligned = None
    if aligned is not None:
        frames = [p.frames for p in aligned]
        mean = [p.mean_reward for p in aligned]
        lo = [p.mean_reward - p.reward_halfwidth for p in aligned]
        hi = [p.mean_reward + p.reward_halfwidth for p in aligned]
        ax.plot(frames, mean, color="tab:blue", label="mean reward")
        ax.fill_between(frames, lo, hi, color="tab:blue", alpha=0.25,
                        label="66% CI")
    else:
        for seed in sorted(curves):
            pts = curves[seed]
            ax.plot([p.frames for p in pts], [p.mean_reward for p in pts],
                    label=f"seed {seed}")
    ax.set_xlabel("frames")
    ax.set_ylabel("mean cumulative reward")
    ax.set_title("Greedy training-set reward")
    ax.legend(loc="best")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def save_ranges_plot(path: str, ranges: Sequence) -> None:
    """Bar chart of mean reward per hundreds range."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    labels = [f"{r.start}-{r.end}" for r in ranges]
    heights = [r.mean_reward for r in ranges]
    ax.bar(range(len(ranges)), heights, color="tab:orange")
    ax.set_xticks(range(len(ranges)))
    ax.set_xticklabels(labels, rotation=45, ha="right")
    ax.set_xlabel("number range")
    ax.set_ylabel("mean cumulative reward")
    ax.set_title("Reward by number range")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
