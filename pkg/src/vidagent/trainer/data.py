"""Corpora for each training stage: teacher SFT data, KTO labels, RL query mixes."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from ..evidence import UnknownQuestion
from ..policy.actions import DiscreteActionSpace, encode_action, featurize
from ..policy.base import PolicyOutput
from ..policy.toy import n_slots_of
from ..reflector import MIN_BUDGET, STRICT, Reflector, is_global
from ..rewards import RewardWeights, total_reward
from ..runtime import (
    ANSWERED,
    BeliefState,
    EpisodeLimits,
    ParseError,
    ToolCall,
    Trajectory,
    found_info,
    parse_action,
    run_episode,
)
from ..video import (
    MULTIPLE_CHOICE,
    OPEN_ENDED,
    TEMPLATES,
    GeneratorConfig,
    QueryInstance,
    SyntheticVideo,
    generate_query,
    generate_video,
    valid_templates,
)
from .sft import SftExample

CHOSEN = "chosen"
REJECTED = "rejected"
ANSWER_WITHOUT_EVIDENCE = "answer_without_evidence"
OVER_DENSE_SHORT_WINDOW = "over_dense_short_window"
UNDER_DENSE_LONG_WINDOW = "under_dense_long_window"
FAILURE_CATEGORIES = (ANSWER_WITHOUT_EVIDENCE, OVER_DENSE_SHORT_WINDOW, UNDER_DENSE_LONG_WINDOW)
KTO_CHOSEN_SHARE = 0.63


class EmptyPool(ValueError):
    pass


@dataclass(frozen=True)
class Item:
    """A video paired with one query about it."""

    video: SyntheticVideo
    query: QueryInstance

    def to_dict(self) -> dict:
        return {"video": self.video.to_dict(), "query": self.query.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "Item":
        return cls(SyntheticVideo.from_dict(d["video"]), QueryInstance.from_dict(d["query"]))


def make_items(
    seeds: Iterable[int],
    kind: str = OPEN_ENDED,
    config: GeneratorConfig | None = None,
    template: str | None = None,
) -> list[Item]:
    items = []
    for s in seeds:
        video = generate_video(s, config)
        if template is not None and template not in valid_templates(video):
            continue
        items.append(Item(video, generate_query(video, s, kind, template)))
    return items


def trajectory_id(traj: Trajectory) -> str:
    return f"{traj.video_id}/{traj.query.query_id}/{traj.policy}/{traj.seed}"


# ---------------------------------------------------------------- step recording

class Recorder:
    """Wraps any policy so each round also records its state features and action index."""

    def __init__(self, inner, space: DiscreteActionSpace | None = None):
        self.inner = inner
        self.space = space or DiscreteActionSpace()
        self.name = getattr(inner, "name", type(inner).__name__)

    def act(self, state: BeliefState, seed: int) -> PolicyOutput:
        out = self.inner.act(state, seed)
        if out.step is not None:
            return out
        try:
            action = parse_action(out.round_text)
        except ParseError:
            return out
        view = featurize(state)
        idx = encode_action(self.space, view, action, state.duration_s)
        step = {
            "features": view.features.tolist(),
            "action": idx,
            "n_slots": n_slots_of(view, self.space),
        }
        return replace(out, step=step)


def trajectory_steps(traj: Trajectory) -> list[dict]:
    return [r.step for r in traj.rounds if r.step is not None]


# ---------------------------------------------------------------- SFT corpus

@dataclass
class ExperienceBank:
    """Successful teacher runs, keyed by the kind of question they solved."""

    entries: list[dict] = field(default_factory=list)

    @staticmethod
    def key(query: QueryInstance) -> tuple[str, str]:
        try:
            template = query.template
        except UnknownQuestion:
            template = "other"
        return template, query.query_kind

    def add(self, query: QueryInstance, teacher: str, traj: Trajectory, reward: float) -> None:
        template, kind = self.key(query)
        self.entries.append(
            {
                "template": template,
                "query_kind": kind,
                "teacher": teacher,
                "trajectory_id": trajectory_id(traj),
                "reward": reward,
            }
        )

    def suggest(self, query: QueryInstance, teachers: Sequence) -> list:
        """Teachers ordered by past successes on similar questions (stable otherwise)."""
        template, kind = self.key(query)
        wins = Counter(
            e["teacher"] for e in self.entries if e["template"] == template and e["query_kind"] == kind
        )
        return sorted(teachers, key=lambda t: -wins[getattr(t, "name", "")])

    def to_dict(self) -> dict:
        return {"entries": list(self.entries)}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperienceBank":
        return cls(list(d.get("entries", [])))


@dataclass
class SftCorpus:
    examples: list[SftExample]
    bank: ExperienceBank
    trajectories: list[Trajectory]


def sft_examples(traj: Trajectory, space: DiscreteActionSpace, tags: Sequence[str] = ()) -> list[SftExample]:
    """Imitation targets from a recorded trajectory.

    Tool rounds imitate the executed (Reflector-corrected) call rather than the
    raw proposal.
    """
    out = []
    for rnd in traj.rounds:
        if rnd.step is None or rnd.error:
            continue
        target = rnd.step["action"]
        call = rnd.executed_call
        if call is not None:
            target = space.snap(call, traj.duration_s)
        out.append(
            SftExample(
                features=tuple(rnd.step["features"]),
                action=int(target),
                n_slots=int(rnd.step["n_slots"]),
                experience_tags=tuple(tags),
            )
        )
    return out


def build_sft_corpus(
    items: Sequence[Item],
    teachers: Sequence,
    *,
    bank: ExperienceBank | None = None,
    reflector_mode: str = STRICT,
    limits: EpisodeLimits | None = None,
    space: DiscreteActionSpace | None = None,
    seed: int = 0,
    keep_failures: bool = False,
) -> SftCorpus:
    """Executor-teacher synthesis: teachers act under a strict Reflector, the bank
    picks which workflow to try first, and only successful runs become examples
    (unless ``keep_failures``)."""
    if not teachers:
        raise ValueError("need at least one teacher")
    space = space or DiscreteActionSpace()
    bank = bank or ExperienceBank()
    reflector = Reflector(reflector_mode)
    examples: list[SftExample] = []
    trajectories: list[Trajectory] = []
    for i, item in enumerate(items):
        for teacher in bank.suggest(item.query, teachers):
            traj = run_episode(
                item.video, item.query, Recorder(teacher, space), limits, reflector, seed=seed + i
            )
            rb = total_reward(traj)
            traj = replace(traj, reward=rb.to_dict())
            trajectories.append(traj)
            if rb.correct or keep_failures:
                template, kind = bank.key(item.query)
                tags = (f"template:{template}", f"kind:{kind}", f"workflow:{traj.policy}")
                examples += sft_examples(traj, space, tags)
            if rb.correct:
                bank.add(item.query, traj.policy, traj, rb.total)
                break
    return SftCorpus(examples, bank, trajectories)


# ---------------------------------------------------------------- KTO labels

@dataclass(frozen=True)
class KtoRules:
    chosen_threshold: float = 1.0
    budget_threshold: float = MIN_BUDGET
    chosen_share: float = KTO_CHOSEN_SHARE
    seed: int = 0


@dataclass(frozen=True)
class KtoExample:
    trajectory_id: str
    label: str
    steps: tuple[dict, ...]
    failure_category: str | None = None

    def __post_init__(self):
        if self.label not in (CHOSEN, REJECTED):
            raise ValueError(f"label must be chosen or rejected, got {self.label!r}")
        if self.label == REJECTED and self.failure_category not in FAILURE_CATEGORIES:
            raise ValueError("rejected examples need a failure category")

    def to_dict(self) -> dict:
        return {
            "trajectory_id": self.trajectory_id,
            "label": self.label,
            "failure_category": self.failure_category,
            "steps": list(self.steps),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KtoExample":
        return cls(d["trajectory_id"], d["label"], tuple(d["steps"]), d.get("failure_category"))


def _in_windows(t: float, windows) -> bool:
    return any(a <= t <= b for a, b in windows)


def has_evidence(traj: Trajectory) -> bool:
    """Some observed frame with a recognised label falls inside an evidence window."""
    windows = traj.query.evidence_windows
    return any(
        ob.labels and _in_windows(ob.timestamp, windows)
        for batch in traj.frame_batches
        for ob in batch.observations
    )


def failure_category(traj: Trajectory, budget_threshold: float = MIN_BUDGET) -> str | None:
    if traj.outcome == ANSWERED and (traj.n_tool_calls == 0 or not has_evidence(traj)):
        return ANSWER_WITHOUT_EVIDENCE
    for rnd in traj.rounds:
        if isinstance(rnd.action, ToolCall) and rnd.action.call.fps > 1:
            return OVER_DENSE_SHORT_WINDOW
    correct = bool(traj.reward and traj.reward.get("correct"))
    if not correct:
        q = traj.query.render()
        for batch in traj.frame_batches:
            call = batch.call
            if (
                is_global(call, traj.duration_s)
                and call.visual_budget < budget_threshold
                and not found_info(q, batch.observations)
            ):
                return UNDER_DENSE_LONG_WINDOW
    return None


def _rebalance(chosen: list, rejected: list, share: float, seed: int) -> tuple[list, list]:
    if not chosen or not rejected:
        return chosen, rejected
    rng = np.random.default_rng(seed)
    if len(chosen) / (len(chosen) + len(rejected)) > share:
        keep = max(1, round(len(rejected) * share / (1 - share)))
        idx = sorted(rng.choice(len(chosen), size=keep, replace=False))
        chosen = [chosen[i] for i in idx]
    else:
        keep = max(1, round(len(chosen) * (1 - share) / share))
        idx = sorted(rng.choice(len(rejected), size=min(keep, len(rejected)), replace=False))
        rejected = [rejected[i] for i in idx]
    return chosen, rejected


def label_kto(trajectories: Iterable[Trajectory], rules: KtoRules | None = None) -> list[KtoExample]:
    """Rule-based chosen/rejected labels, rebalanced toward the configured chosen share."""
    rules = rules or KtoRules()
    chosen, rejected = [], []
    for traj in trajectories:
        if traj.reward is None:
            raise ValueError(f"trajectory {trajectory_id(traj)} has not been scored")
        steps = tuple(trajectory_steps(traj))
        if not steps:
            continue
        cat = failure_category(traj, rules.budget_threshold)
        if cat is not None:
            rejected.append(KtoExample(trajectory_id(traj), REJECTED, steps, cat))
        elif traj.reward["total"] >= rules.chosen_threshold:
            chosen.append(KtoExample(trajectory_id(traj), CHOSEN, steps))
    chosen, rejected = _rebalance(chosen, rejected, rules.chosen_share, rules.seed)
    return chosen + rejected


# ---------------------------------------------------------------- enhancement

def _largest_remainder(weights: Sequence[float], total: int) -> list[int]:
    s = sum(weights)
    quotas = [w * total / s for w in weights]
    counts = [math.floor(q) for q in quotas]
    order = sorted(range(len(weights)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[: total - sum(counts)]:
        counts[i] += 1
    return counts


def failure_counts(failures: Iterable[Trajectory]) -> Counter:
    counts: Counter = Counter()
    for traj in failures:
        try:
            counts[traj.query.template] += 1
        except UnknownQuestion:
            continue
    return counts


def enhance_dataset(
    failures: Sequence[Trajectory],
    video_pool: Sequence[SyntheticVideo],
    seed: int,
    n_queries: int | None = None,
) -> list[Item]:
    """New open-ended queries on fresh videos, weighted toward the templates that failed most."""
    if not video_pool:
        raise EmptyPool("enhancement needs at least one video")
    n = n_queries if n_queries is not None else len(video_pool)
    counts = failure_counts(failures)
    weights = [counts[t] for t in TEMPLATES] if counts else [1] * len(TEMPLATES)
    per_template = _largest_remainder(weights, n)
    rng = np.random.default_rng(seed)
    plan = [t for t, k in zip(TEMPLATES, per_template) for _ in range(k)]
    plan = [plan[i] for i in rng.permutation(len(plan))]

    out = []
    cursor = int(rng.integers(len(video_pool)))
    for i, template in enumerate(plan):
        for hop in range(len(video_pool)):
            video = video_pool[(cursor + hop) % len(video_pool)]
            if template in valid_templates(video):
                break
        else:
            template, video = "windowed", video_pool[cursor % len(video_pool)]
        cursor = (cursor + hop + 1) % len(video_pool)
        out.append(Item(video, generate_query(video, seed * 100_003 + i, OPEN_ENDED, template)))
    return out


# ---------------------------------------------------------------- RL mix

def build_rl_mix(
    oe_items: Sequence, mc_items: Sequence, ratio: float = 0.9, size: int | None = None
) -> list:
    """Deterministically interleave open-ended and multiple-choice items.

    Without ``size`` the mix is as large as both pools allow at this ratio.
    """
    if not 0 <= ratio <= 1:
        raise ValueError("ratio must lie in [0, 1]")
    if not oe_items or not mc_items:
        raise EmptyPool("both the open-ended and multiple-choice pools must be non-empty")
    if size is None:
        caps = []
        if ratio > 0:
            caps.append(len(oe_items) / ratio)
        if ratio < 1:
            caps.append(len(mc_items) / (1 - ratio))
        size = math.floor(min(caps) + 1e-9)
    n_oe = round(size * ratio)
    n_mc = size - n_oe
    if n_oe > len(oe_items) or n_mc > len(mc_items):
        raise EmptyPool(f"pools too small for {n_oe} open-ended + {n_mc} multiple-choice items")
    keyed = [((k + 0.5) / n_oe, 0, oe_items[k]) for k in range(n_oe)]
    keyed += [((k + 0.5) / n_mc, 1, mc_items[k]) for k in range(n_mc)]
    keyed.sort(key=lambda x: (x[0], x[1]))
    return [x[2] for x in keyed]


def reference_items(
    seed: int, n: int, *, mc_every: int = 10, config: GeneratorConfig | None = None
) -> list[Item]:
    """A fixed query family: every ``mc_every``-th item multiple-choice, the rest open-ended."""
    out = []
    for i in range(n):
        s = seed * 1_000_003 + i
        kind = MULTIPLE_CHOICE if mc_every and i % mc_every == mc_every - 1 else OPEN_ENDED
        video = generate_video(s, config)
        out.append(Item(video, generate_query(video, s, kind)))
    return out


def scored(traj: Trajectory, judge=None, weights: RewardWeights | None = None) -> Trajectory:
    return replace(traj, reward=total_reward(traj, judge, weights).to_dict())


def is_answer_without_evidence(traj: Trajectory) -> bool:
    return traj.outcome == ANSWERED and (traj.n_tool_calls == 0 or not has_evidence(traj))

