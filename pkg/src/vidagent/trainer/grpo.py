"""Online policy-gradient training with group-normalised advantages and a KL anchor."""

from __future__ import annotations

import csv
import hashlib
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..policy.toy import ToyPolicy, ToyPolicyParams, batch_logprobs, score_grad
from ..rewards import RewardWeights, total_reward
from ..runtime import EpisodeLimits, run_episode
from .data import Item
from .optim import Adam

log = logging.getLogger(__name__)

GRPO = "grpo"
REINFORCE = "reinforce"
CURVE_FIELDS = ("step", "reward_mean", "kl", "entropy", "loss")


class DegenerateGroup(UserWarning):
    """Every rollout in a group earned the same reward, so its advantages are all zero."""


def group_advantages(rewards: Sequence[float], eps: float = 1e-8, mode: str = GRPO) -> np.ndarray:
    r = np.asarray(rewards, dtype=float)
    if mode == REINFORCE:
        return r.copy()
    if mode != GRPO:
        raise ValueError(f"unknown advantage mode {mode!r}")
    return (r - r.mean()) / (r.std() + eps)


def is_degenerate(rewards: Sequence[float]) -> bool:
    r = np.asarray(rewards, dtype=float)
    return bool(np.all(r == r[0]))


@dataclass
class GrpoConfig:
    steps: int = 2000
    group_size: int = 8
    queries_per_step: int = 4
    kl_coef: float = 0.05
    lr: float = 1e-2
    eps: float = 1e-8
    advantage: str = GRPO
    seed: int = 0

    def __post_init__(self):
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")
        if self.queries_per_step < 1 or self.steps < 0:
            raise ValueError("queries_per_step must be >= 1 and steps >= 0")


@dataclass
class GrpoBatch:
    items: list[Item]
    rewards: np.ndarray  # (queries, G)
    advantages: np.ndarray  # (queries, G)
    reference_id: str


@dataclass
class GrpoResult:
    params: ToyPolicyParams
    curve: list[dict] = field(default_factory=list)
    degenerate_groups: int = 0
    optimizer: Adam | None = None


def snapshot_id(params: ToyPolicyParams) -> str:
    return hashlib.sha256(params.theta.tobytes()).hexdigest()[:12]


def _query_order(n: int, rng: np.random.Generator):
    while True:
        yield from rng.permutation(n)


def policy_step(
    params: ToyPolicyParams,
    reference: ToyPolicyParams,
    phi: np.ndarray,
    actions: np.ndarray,
    slots: np.ndarray,
    owner: np.ndarray,
    advantages: np.ndarray,
    kl_coef: float,
) -> tuple[np.ndarray, dict]:
    """Gradient of the loss and the per-step diagnostics for one batch of rollouts.

    ``owner`` maps each visited state to its trajectory; ``advantages`` is per
    trajectory. The KL term uses the exact per-state divergence over visited
    states, whose gradient is lower-variance than the sampled log-ratio that is
    reported as ``kl``.
    """
    n_traj = len(advantages)
    lp, logp, mask = batch_logprobs(params.theta, params.space, phi, actions, slots)
    lq_taken, logq, _ = batch_logprobs(reference.theta, reference.space, phi, actions, slots)
    p = np.exp(logp)
    diff = np.where(mask, logp, 0.0) - np.where(mask, logq, 0.0)
    kl_state = (p * diff).sum(axis=1)
    entropy = -(p * np.where(mask, logp, 0.0)).sum(axis=1)

    pg = score_grad(phi, actions, logp, advantages[owner]) / n_traj
    dkl_dz = p * (diff - kl_state[:, None])
    kl_grad = phi.T @ dkl_dz / len(phi)
    grad_loss = -pg + kl_coef * kl_grad

    traj_lp = np.bincount(owner, weights=lp, minlength=n_traj)
    kl_hat = float(np.mean(lp - lq_taken))
    stats = {
        "kl": kl_hat,
        "kl_exact": float(kl_state.mean()),
        "entropy": float(entropy.mean()),
        "loss": float(-np.mean(advantages * traj_lp) + kl_coef * kl_hat),
    }
    return grad_loss, stats


def collect_group(
    item: Item,
    params: ToyPolicyParams,
    group_size: int,
    seed: int,
    limits: EpisodeLimits | None = None,
    judge=None,
    weights: RewardWeights | None = None,
):
    policy = ToyPolicy(params)
    rewards, trajs = [], []
    for g in range(group_size):
        traj = run_episode(item.video, item.query, policy, limits, seed=seed + g)
        rewards.append(total_reward(traj, judge, weights).total)
        trajs.append(traj)
    return trajs, rewards


def run_grpo(
    items: Sequence[Item],
    params: ToyPolicyParams,
    reference: ToyPolicyParams,
    config: GrpoConfig | None = None,
    *,
    limits: EpisodeLimits | None = None,
    judge=None,
    weights: RewardWeights | None = None,
    optimizer: Adam | None = None,
    curve_path: str | Path | None = None,
    on_step: Callable[[int, ToyPolicyParams, dict, GrpoBatch], None] | None = None,
    log_every: int = 100,
) -> GrpoResult:
    cfg = config or GrpoConfig()
    if not items:
        raise ValueError("GRPO needs at least one training query")
    params = params.copy()
    reference = reference.copy()
    opt = optimizer or Adam(params.theta.shape, lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    order = _query_order(len(items), rng)
    curve: list[dict] = []
    degenerate = 0
    ref_id = snapshot_id(reference)
    t0 = time.perf_counter()

    for step_no in range(1, cfg.steps + 1):
        phi, actions, slots, owner, adv_all, rewards_all = [], [], [], [], [], []
        batch_items, groups, group_adv = [], [], []
        n_traj = 0
        for q in range(cfg.queries_per_step):
            item = items[next(order)]
            batch_items.append(item)
            base = ((cfg.seed * 1_000_003 + step_no) * 1_009 + q) * cfg.group_size
            trajs, rewards = collect_group(item, params, cfg.group_size, base, limits, judge, weights)
            if cfg.advantage == GRPO and is_degenerate(rewards):
                degenerate += 1
                log.debug("step %d: degenerate group (all rewards %.3f)", step_no, rewards[0])
            adv = group_advantages(rewards, cfg.eps, cfg.advantage)
            groups.append(rewards)
            group_adv.append(adv)
            for traj, a in zip(trajs, adv):
                for rnd in traj.rounds:
                    if rnd.step is None:
                        continue
                    phi.append(rnd.step["features"])
                    actions.append(rnd.step["action"])
                    slots.append(rnd.step["n_slots"])
                    owner.append(n_traj)
                adv_all.append(a)
                n_traj += 1
            rewards_all += rewards
        grad, stats = policy_step(
            params,
            reference,
            np.asarray(phi, dtype=float),
            np.asarray(actions, dtype=int),
            np.asarray(slots, dtype=int),
            np.asarray(owner, dtype=int),
            np.asarray(adv_all, dtype=float),
            cfg.kl_coef,
        )
        params.theta = opt.step(params.theta, grad)
        row = {"step": step_no, "reward_mean": float(np.mean(rewards_all)), **stats}
        curve.append(row)
        if on_step is not None:
            batch = GrpoBatch(batch_items, np.array(groups), np.array(group_adv), ref_id)
            on_step(step_no, params, row, batch)
        if log_every and step_no % log_every == 0:
            recent = np.mean([r["reward_mean"] for r in curve[-log_every:]])
            log.info(
                "grpo step %d reward %.3f kl %.4f entropy %.3f (%.1fs)",
                step_no, recent, row["kl"], row["entropy"], time.perf_counter() - t0,
            )
    if degenerate:
        log.info("%d degenerate groups (zero advantage, KL-only update)", degenerate)
    if curve_path is not None:
        write_curve(curve, curve_path)
    return GrpoResult(params, curve, degenerate, opt)


def write_curve(curve: Sequence[dict], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CURVE_FIELDS, extrasaction="ignore")
        writer.writeheader()
        for row in curve:
            writer.writerow(row)


def moving_average(values: Sequence[float], window: int = 50) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if len(v) < window:
        return np.array([v.mean()]) if len(v) else v
    kernel = np.ones(window) / window
    return np.convolve(v, kernel, mode="valid")


def config_dict(cfg: GrpoConfig) -> dict:
    return asdict(cfg)
