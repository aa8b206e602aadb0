"""Benchmark-style evaluation of a policy over a fixed query set."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..frametool import QWEN, TokenProfile
from ..rewards import RewardWeights, total_reward
from ..rouge import rouge_reward
from ..runtime import ANSWERED, EpisodeLimits, Trajectory, run_episode
from ..trainer.data import Item, is_answer_without_evidence
from ..video import MULTIPLE_CHOICE

ESTIMATE_TOKENS_PER_FRAME = 650
OE_ACCURACY_THRESHOLD = 0.5


def is_correct(traj: Trajectory) -> tuple[bool, float | None]:
    """Report-level correctness: exact letter for MCQ, rouge >= 0.5 for open-ended."""
    q = traj.query
    if traj.outcome != ANSWERED:
        return False, (0.0 if q.query_kind != MULTIPLE_CHOICE else None)
    if q.query_kind == MULTIPLE_CHOICE:
        return traj.final_answer == q.answer_gt, None
    score = rouge_reward(traj.final_answer or "", q.answer_gt)
    return score >= OE_ACCURACY_THRESHOLD, score


@dataclass
class EvalReport:
    n: int
    accuracy: float
    accuracy_mcq: float | None
    accuracy_oe: float | None
    mean_rouge: float | None
    mean_reward: float
    mean_tokens: float
    mean_rounds: float
    mean_frames: float
    estimated_frames: float
    answer_without_evidence: float
    trajectories: list[Trajectory] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if k != "trajectories"}


def _episode(args) -> Trajectory:
    item, policy, limits, reflector, judge, weights, profile, seed = args
    traj = run_episode(item.video, item.query, policy, limits, reflector, seed=seed, profile=profile)
    return replace(traj, reward=total_reward(traj, judge, weights).to_dict())


def summarize(trajs: Sequence[Trajectory]) -> EvalReport:
    if not trajs:
        raise ValueError("cannot summarise an empty evaluation")
    verdicts = [is_correct(t) for t in trajs]
    correct = np.array([c for c, _ in verdicts], dtype=float)
    mcq = np.array([t.query.query_kind == MULTIPLE_CHOICE for t in trajs])
    rouges = [s for _, s in verdicts if s is not None]
    tokens = np.array([t.tokens_spent for t in trajs], dtype=float)
    frames = [sum(b.call.nframes for b in t.frame_batches) for t in trajs]
    return EvalReport(
        n=len(trajs),
        accuracy=float(correct.mean()),
        accuracy_mcq=float(correct[mcq].mean()) if mcq.any() else None,
        accuracy_oe=float(correct[~mcq].mean()) if (~mcq).any() else None,
        mean_rouge=float(np.mean(rouges)) if rouges else None,
        mean_reward=float(np.mean([t.reward["total"] for t in trajs])) if all(t.reward for t in trajs) else 0.0,
        mean_tokens=float(tokens.mean()),
        mean_rounds=float(np.mean([len(t.rounds) for t in trajs])),
        mean_frames=float(np.mean(frames)),
        estimated_frames=float(tokens.mean() / ESTIMATE_TOKENS_PER_FRAME),
        answer_without_evidence=float(np.mean([is_answer_without_evidence(t) for t in trajs])),
        trajectories=list(trajs),
    )


def evaluate(
    policy,
    items: Sequence[Item],
    limits: EpisodeLimits | None = None,
    *,
    reflector=None,
    judge=None,
    weights: RewardWeights | None = None,
    profile: TokenProfile = QWEN,
    seed: int = 0,
    workers: int = 1,
) -> EvalReport:
    """Run one seeded episode per item. Episode ``i`` uses seed ``seed + i`` whatever ``workers`` is."""
    if not items:
        raise ValueError("evaluation needs a non-empty query set")
    jobs = [
        (item, policy, limits, reflector, judge, weights, profile, seed + i)
        for i, item in enumerate(items)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trajs = list(pool.map(_episode, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        trajs = [_episode(j) for j in jobs]
    return summarize(trajs)
