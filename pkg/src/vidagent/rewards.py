"""Composite trajectory reward: accuracy (CSV or ROUGE) plus the format term."""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass

from .evidence import answer_from_batches
from .rouge import rouge_reward
from .runtime import ANSWERED, Trajectory
from .video import MULTIPLE_CHOICE

log = logging.getLogger(__name__)

FORMAT_BONUS = 0.05
OE_CORRECT_THRESHOLD = 0.5


class NoFramesWarning(UserWarning):
    """CSV scoring of a trajectory that never retrieved any frames."""


class DegenerateDenominator(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class RewardWeights:
    w_acc: float = 1.0
    w_fmt: float = 1.0

    def __post_init__(self):
        if self.w_acc < 0 or self.w_fmt < 0:
            raise ValueError("reward weights must be non-negative")
        if self.w_acc == 0 and self.w_fmt == 0:
            raise ValueError("reward weights cannot both be zero")


@dataclass(frozen=True)
class RewardBreakdown:
    r_acc: float
    r_fmt: float
    total: float
    kind: str
    w_acc: float = 1.0
    w_fmt: float = 1.0
    correct: bool = False
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["flags"] = list(self.flags)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RewardBreakdown":
        return cls(**{**d, "flags": tuple(d.get("flags", ()))})


class EvidenceJudge:
    """Answers a multiple-choice question from a set of frames alone.

    Stands in for the base model acting as judge: it sees the question, the
    choices and the observations of the agent's last tool round, and replies
    with a letter, or ``""`` when those frames do not settle the question.
    """

    name = "evidence-judge"

    def judge(self, question: str, observations) -> str:
        return answer_from_batches(question, [observations])


def csv_reward(trajectory: Trajectory, judge=None) -> int:
    judge = judge or EvidenceJudge()
    if trajectory.query.query_kind != MULTIPLE_CHOICE:
        raise ValueError("CSV reward only applies to multiple-choice queries")
    if trajectory.outcome != ANSWERED:
        return 0
    if not trajectory.frame_batches:
        warnings.warn("trajectory has no tool rounds; CSV reward is 0", NoFramesWarning)
        return 0
    gt = trajectory.query.answer_gt
    if trajectory.final_answer != gt:
        return 0
    letter = judge.judge(trajectory.query.render(), trajectory.frame_batches[-1].observations)
    return int(letter == gt)


def format_reward(trajectory: Trajectory, correct: bool) -> float:
    return FORMAT_BONUS if trajectory.n_tool_calls >= 1 and not correct else 0.0


def total_reward(
    trajectory: Trajectory, judge=None, weights: RewardWeights | None = None
) -> RewardBreakdown:
    weights = weights or RewardWeights()
    flags: list[str] = []
    if trajectory.query.query_kind == MULTIPLE_CHOICE:
        kind = "csv"
        if trajectory.outcome == ANSWERED and not trajectory.frame_batches:
            flags.append("no_frames")
            r_acc = 0.0
        else:
            r_acc = float(csv_reward(trajectory, judge))
        correct = r_acc == 1.0
    else:
        kind = "rouge"
        if trajectory.outcome == ANSWERED:
            r_acc = rouge_reward(trajectory.final_answer or "", trajectory.query.answer_gt)
        else:
            r_acc = 0.0
        correct = r_acc >= OE_CORRECT_THRESHOLD
    if trajectory.outcome != ANSWERED:
        flags.append(trajectory.outcome)
    r_fmt = format_reward(trajectory, correct)
    total = weights.w_acc * r_acc + weights.w_fmt * r_fmt
    return RewardBreakdown(
        r_acc=r_acc,
        r_fmt=r_fmt,
        total=total,
        kind=kind,
        w_acc=weights.w_acc,
        w_fmt=weights.w_fmt,
        correct=correct,
        flags=tuple(flags),
    )


def sah_ratio(in_acc: float, out_acc: float) -> float:
    """(OutAcc - InAcc) / (1 - InAcc), accuracies as fractions."""
    if in_acc == 1:
        raise DegenerateDenominator("in_acc == 1 leaves no room for aggregation errors")
    if not 0 <= in_acc < 1 or not 0 <= out_acc <= 1:
        raise ValueError("accuracies must be fractions in [0, 1]")
    return (out_acc - in_acc) / (1 - in_acc)
