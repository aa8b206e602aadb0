"""SFT, then KTO, then GRPO (optionally data-enhanced) on the toy policy."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

from ..policy.scripted import DirectDense, GlobalThenZoom
from ..policy.toy import ToyPolicy, ToyPolicyParams
from ..rewards import RewardWeights
from ..runtime import EpisodeLimits, Trajectory, run_episode
from ..video import MULTIPLE_CHOICE, GeneratorConfig, generate_video
from .data import (
    Item,
    KtoRules,
    build_rl_mix,
    build_sft_corpus,
    enhance_dataset,
    label_kto,
    reference_items,
    scored,
)
from .grpo import GrpoConfig, GrpoResult, run_grpo
from .kto import run_kto
from .optim import Adam
from .sft import run_sft

log = logging.getLogger(__name__)

TEACHERS = {
    "global-then-zoom": GlobalThenZoom,
    "direct-dense": DirectDense,
}


def make_teachers(names: Sequence[str]) -> list:
    try:
        return [TEACHERS[n]() for n in names]
    except KeyError as exc:
        raise ValueError(f"unknown teacher {exc.args[0]!r}; pick from {sorted(TEACHERS)}") from None


@dataclass
class StageSettings:
    sft_epochs: int = 2
    sft_lr: float = 1e-2
    sft_batch: int = 8
    teachers: tuple[str, ...] = ("global-then-zoom", "direct-dense")
    kto_beta: float = 0.1
    kto_lr: float = 1e-3
    kto_epochs: int = 30
    kto_batch: int = 8
    kto_samples: int = 2
    chosen_threshold: float = 1.0
    grpo: GrpoConfig = field(default_factory=lambda: GrpoConfig(lr=1e-2))
    rl_ratio: float = 0.9
    enhance_after: int = 0
    n_sft: int = 300
    n_kto: int = 300
    n_rl: int = 1000
    n_enhance: int = 200
    mc_every: int = 10


@dataclass
class PipelineResult:
    sft: ToyPolicyParams
    kto: ToyPolicyParams
    grpo: ToyPolicyParams
    sft_losses: list[float]
    kto_losses: list[float]
    grpo_curve: list[dict]
    corpus_sizes: dict
    enhanced: GrpoResult | None = None


def sample_trajectories(
    params: ToyPolicyParams,
    items: Sequence[Item],
    samples: int,
    seed: int,
    limits: EpisodeLimits | None = None,
    weights: RewardWeights | None = None,
) -> list[Trajectory]:
    policy = ToyPolicy(params, name="toy-sft")
    out = []
    for i, item in enumerate(items):
        for k in range(samples):
            traj = run_episode(item.video, item.query, policy, limits, seed=(seed * 7919 + i) * samples + k)
            out.append(scored(traj, weights=weights))
    return out


def rl_items(seed: int, n: int, ratio: float, config: GeneratorConfig | None = None) -> list[Item]:
    """A ``ratio`` open-ended / rest multiple-choice training mix of ``n`` items."""
    n_oe = round(n * ratio)
    oe = reference_items(seed, max(n_oe, 1), mc_every=0, config=config)
    mc_pool = reference_items(seed + 10_007, max(n - n_oe, 1), mc_every=1, config=config)
    if n - n_oe == 0:
        return oe[:n]
    return build_rl_mix(oe, mc_pool, ratio, size=n)


def run_pipeline(
    settings: StageSettings | None = None,
    *,
    seed: int = 1,
    limits: EpisodeLimits | None = None,
    weights: RewardWeights | None = None,
    config: GeneratorConfig | None = None,
) -> PipelineResult:
    s = settings or StageSettings()

    sft_items = reference_items(seed * 100 + 1, s.n_sft, mc_every=s.mc_every, config=config)
    corpus = build_sft_corpus(sft_items, make_teachers(s.teachers), limits=limits, seed=seed)
    sft = run_sft(corpus.examples, epochs=s.sft_epochs, lr=s.sft_lr, batch_size=s.sft_batch, seed=seed)
    log.info("sft: %d examples from %d teacher runs", len(corpus.examples), len(corpus.trajectories))

    kto_items = reference_items(seed * 100 + 2, s.n_kto, mc_every=s.mc_every, config=config)
    rollouts = sample_trajectories(sft.params, kto_items, s.kto_samples, seed, limits, weights)
    kto_data = label_kto(rollouts + corpus.trajectories, KtoRules(s.chosen_threshold, seed=seed))
    kto = run_kto(
        kto_data,
        sft.params,
        beta=s.kto_beta,
        lr=s.kto_lr,
        epochs=s.kto_epochs,
        batch_size=s.kto_batch,
        seed=seed,
    )

    train = rl_items(seed * 100 + 3, s.n_rl, s.rl_ratio, config)
    grpo_cfg = replace(s.grpo, seed=seed)
    grpo = run_grpo(train, kto.params, kto.params, grpo_cfg, limits=limits, weights=weights)

    enhanced = None
    if s.enhance_after:
        enhanced = enhance_and_retrain(
            grpo.params, kto.params, train, grpo_cfg, s.enhance_after, s.n_enhance,
            seed=seed, limits=limits, weights=weights, config=config,
        )

    final = enhanced.params if enhanced else grpo.params
    sizes = {
        "sft_examples": len(corpus.examples),
        "kto_examples": len(kto_data),
        "kto_chosen": sum(ex.label == "chosen" for ex in kto_data),
        "rl_items": len(train),
    }
    return PipelineResult(
        sft.params, kto.params, final, sft.epoch_losses, kto.epoch_losses, grpo.curve, sizes, enhanced
    )


def enhance_and_retrain(
    params: ToyPolicyParams,
    reference: ToyPolicyParams,
    train: Sequence[Item],
    cfg: GrpoConfig,
    steps: int,
    n_new: int,
    *,
    seed: int,
    limits: EpisodeLimits | None = None,
    weights: RewardWeights | None = None,
    config: GeneratorConfig | None = None,
) -> GrpoResult:
    """Find where the policy still fails, synthesise similar fresh queries, retrain.

    The optimizer starts from scratch for the retraining run.
    """
    probe = sample_trajectories(params, train[: min(len(train), 200)], 1, seed + 1, limits, weights)
    failures = [t for t in probe if not t.reward["correct"]]
    pool = [generate_video(seed * 1_000_003 + 500_000 + i, config) for i in range(n_new)]
    fresh = enhance_dataset(failures, pool, seed, n_new)
    log.info("enhance: %d failures -> %d new queries", len(failures), len(fresh))
    mixed = list(fresh) + [it for it in train if it.query.query_kind == MULTIPLE_CHOICE][: max(1, n_new // 9)]
    return run_grpo(
        mixed,
        params,
        reference,
        replace(cfg, steps=steps),
        limits=limits,
        weights=weights,
        optimizer=Adam(params.theta.shape, lr=cfg.lr),
    )

