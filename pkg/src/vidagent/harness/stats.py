"""Per-round behaviour statistics of tool calls (frames, resize, time range, tokens)."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ..frametool import QWEN, TokenProfile, token_cost
from ..runtime import Trajectory

METRICS = ("nframes", "resize", "time_range", "tokens", "frames_x_resize")
CSV_FIELDS = ("round", "metric", "count", "mean", "std", "min", "max")


class NoToolRounds(ValueError):
    pass


def _summary(values: list[float]) -> dict:
    arr = np.asarray(values, dtype=float)
    hist = Counter(round(float(v), 9) for v in values)
    return {
        "count": len(values),
        "mean": float(arr.mean()),
        "std": float(arr.std()),
        "min": float(arr.min()),
        "max": float(arr.max()),
        "hist": [[v, hist[v]] for v in sorted(hist)],
    }


@dataclass(frozen=True)
class RoundStats:
    """``rounds[k][metric]`` summarises the k-th executed tool call (1-based) across trajectories."""

    rounds: dict[int, dict[str, dict]]
    n_trajectories: int

    def mean(self, round_no: int, metric: str) -> float:
        return self.rounds[round_no][metric]["mean"]

    def to_dict(self) -> dict:
        return {
            "n_trajectories": self.n_trajectories,
            "rounds": {str(k): v for k, v in sorted(self.rounds.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def rows(self) -> list[dict]:
        return [
            {"round": k, "metric": m, **{f: self.rounds[k][m][f] for f in CSV_FIELDS[2:]}}
            for k in sorted(self.rounds)
            for m in METRICS
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.rows())
        return buf.getvalue()


def compute_round_stats(
    trajectories: Iterable[Trajectory], profile: TokenProfile = QWEN
) -> RoundStats:
    per_round: dict[int, dict[str, list[float]]] = {}
    n = 0
    for traj in trajectories:
        n += 1
        for k, batch in enumerate(traj.frame_batches, 1):
            call = batch.call
            bucket = per_round.setdefault(k, {m: [] for m in METRICS})
            bucket["nframes"].append(call.nframes)
            bucket["resize"].append(call.resize)
            bucket["time_range"].append(call.end_time - call.start_time)
            bucket["tokens"].append(token_cost(call, profile))
            bucket["frames_x_resize"].append(call.nframes * call.resize)
    if not per_round:
        raise NoToolRounds(f"none of the {n} trajectories executed a tool call")
    rounds = {k: {m: _summary(v) for m, v in metrics.items()} for k, metrics in per_round.items()}
    return RoundStats(rounds, n)
