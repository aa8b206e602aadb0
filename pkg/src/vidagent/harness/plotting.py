from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .stats import METRICS, RoundStats  # noqa: E402

_TITLES = {
    "nframes": "frames per call",
    "resize": "resize",
    "time_range": "time range (s)",
    "tokens": "visual tokens",
    "frames_x_resize": "frames x resize",
}


def plot_round_stats(stats: RoundStats, path: str | Path) -> Path:
    """One panel per metric: mean +/- std against round index."""
    path = Path(path)
    rounds = sorted(stats.rounds)
    fig, axes = plt.subplots(1, len(METRICS), figsize=(3.2 * len(METRICS), 3.0))
    for ax, metric in zip(axes, METRICS):
        means = [stats.rounds[k][metric]["mean"] for k in rounds]
        stds = [stats.rounds[k][metric]["std"] for k in rounds]
        ax.bar(rounds, means, yerr=stds, color="tab:blue", alpha=0.8, capsize=3)
        ax.set_title(_TITLES[metric], fontsize=10)
        ax.set_xlabel("round")
        ax.set_xticks(rounds)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_curve(curve: Sequence[dict], path: str | Path, window: int = 50) -> Path:
    path = Path(path)
    steps = np.array([r["step"] for r in curve])
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.0))
    for ax, key in zip(axes, ("reward_mean", "kl", "entropy")):
        vals = np.array([r[key] for r in curve], dtype=float)
        ax.plot(steps, vals, color="0.75", lw=0.6)
        if len(vals) >= window:
            smooth = np.convolve(vals, np.ones(window) / window, mode="valid")
            ax.plot(steps[window - 1 :], smooth, color="tab:red", lw=1.4)
        ax.set_title(key)
        ax.set_xlabel("step")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_losses(losses: Sequence[float], path: str | Path, title: str) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.plot(range(1, len(losses) + 1), losses, marker="o")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
