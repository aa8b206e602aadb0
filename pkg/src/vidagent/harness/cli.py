"""Command-line entry point. Every command writes into a fresh run directory."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from ..evidence import UnknownQuestion
from ..frametool import PROFILES, execute
from ..policy import (
    ChatPolicy,
    DirectDense,
    EmptyAnswer,
    GlobalThenZoom,
    OraclePolicy,
    RandomGuess,
    ToyPolicy,
    ToyPolicyParams,
)
from ..reflector import Reflector
from ..rewards import EvidenceJudge, RewardBreakdown, RewardWeights, total_reward
from ..runtime import Trajectory, run_episode
from ..trainer.data import (
    Item,
    KtoExample,
    KtoRules,
    build_sft_corpus,
    enhance_dataset,
    failure_counts,
    label_kto,
    reference_items,
)
from ..trainer.grpo import GrpoConfig, run_grpo, write_curve
from ..trainer.kto import run_kto
from ..trainer.pipeline import enhance_and_retrain, make_teachers, rl_items, sample_trajectories
from ..trainer.sft import LARGE_MODEL_SFT, run_sft
from ..video import SyntheticVideo, generate_video
from .config import ConfigError, RunConfig, dump_config, load_config
from .evaluate import evaluate
from .io import read_jsonl, write_json, write_jsonl
from .stats import compute_round_stats

log = logging.getLogger("vidagent")

SPLITS = ("sft", "kto", "rl", "eval")
LARGE_MODEL_LR = {"sft": LARGE_MODEL_SFT["lr"], "kto": LARGE_MODEL_SFT["lr"], "grpo": 1e-6}


class CliError(RuntimeError):
    pass


# ---------------------------------------------------------------- helpers

def run_dir(base: str | Path, cfg: RunConfig, command: str) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    path = Path(base) / f"{stamp}-{command}-{cfg.hash()}"
    n = 1
    while path.exists():
        n += 1
        path = Path(base) / f"{stamp}-{command}-{cfg.hash()}-{n}"
    path.mkdir(parents=True)
    dump_config(cfg, path / "config.yaml")
    return path


def split_items(cfg: RunConfig, split: str) -> list[Item]:
    d, s = cfg.data, cfg.seeds
    if split == "sft":
        return reference_items(s.train * 100 + 1, d.n_sft, mc_every=d.mc_every, config=cfg.generator)
    if split == "kto":
        return reference_items(s.kto * 100 + 2, d.n_kto, mc_every=d.mc_every, config=cfg.generator)
    if split == "rl":
        return rl_items(s.train * 100 + 3, d.n_rl, d.rl_ratio, cfg.generator)
    if split == "eval":
        return reference_items(s.eval, d.n_eval, mc_every=d.mc_every, config=cfg.generator)
    raise CliError(f"unknown split {split!r}")


def load_items(path: str | None, cfg: RunConfig, split: str) -> list[Item]:
    if path:
        return read_jsonl(path, Item.from_dict)
    return split_items(cfg, split)


def build_policy(cfg: RunConfig, items=(), checkpoint: str | None = None):
    p = cfg.policy
    ckpt = checkpoint or p.checkpoint
    if p.kind == "toy":
        params = ToyPolicyParams.load(ckpt) if ckpt else ToyPolicyParams.zeros()
        return ToyPolicy(params, greedy=p.greedy, name=f"toy:{Path(ckpt).stem if ckpt else 'zeros'}")
    if p.kind == "direct-dense":
        return DirectDense(p.nframes, p.resize)
    if p.kind == "global-then-zoom":
        return GlobalThenZoom()
    if p.kind == "random":
        return RandomGuess()
    if p.kind == "empty":
        return EmptyAnswer()
    if p.kind == "oracle":
        return OraclePolicy({it.video.video_id: it.video for it in items})
    if p.kind == "chat":
        if not p.endpoint:
            raise ConfigError("policy.endpoint is required for the chat policy")
        return ChatPolicy(p.endpoint, p.model, timeout=p.timeout)
    raise ConfigError(f"unknown policy {p.kind!r}")


def _reflector(cfg: RunConfig):
    return None if cfg.reflector == "none" else Reflector(cfg.reflector)


def _stamp(traj: Trajectory, cfg: RunConfig, video: SyntheticVideo) -> Trajectory:
    meta = {**traj.meta, "config_hash": cfg.hash(), "video": video.to_dict()}
    return replace(traj, meta=meta)


def _traj_record(traj: Trajectory) -> dict:
    return traj.to_dict()


def _save_checkpoint(params: ToyPolicyParams, path: Path, cfg: RunConfig, stage: str, **extra) -> None:
    meta = {
        "stage": stage,
        "seed": cfg.seeds.train,
        "config_hash": cfg.hash(),
        "large_model_lr": LARGE_MODEL_LR.get(stage),
        **extra,
    }
    params.save(path, meta)
    write_json(path.with_suffix(".meta.json"), meta)


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    policy = cfg.policy
    if getattr(args, "policy", None):
        policy = replace(policy, kind=args.policy)
    if getattr(args, "checkpoint", None):
        policy = replace(policy, checkpoint=args.checkpoint)
    if getattr(args, "greedy", False):
        policy = replace(policy, greedy=True)
    if getattr(args, "endpoint", None):
        policy = replace(policy, endpoint=args.endpoint)
    out = replace(cfg, policy=policy)
    if getattr(args, "reflector", None):
        out = replace(out, reflector=args.reflector)
    if getattr(args, "profile", None):
        out = replace(out, profile=args.profile)
    RunConfig.__post_init__(out)
    return out


# ---------------------------------------------------------------- commands

def cmd_gen_data(args, cfg: RunConfig) -> dict:
    out = run_dir(args.out, cfg, "gen-data")
    counts = {}
    for split in args.splits:
        items = split_items(cfg, split)
        counts[split] = write_jsonl(out / "data" / split / "items.jsonl", (it.to_dict() for it in items))
    return {"run_dir": str(out), "items": counts}


def cmd_run_episode(args, cfg: RunConfig) -> dict:
    items = load_items(args.items, cfg, "eval")
    if not 0 <= args.index < len(items):
        raise CliError(f"--index {args.index} outside 0..{len(items) - 1}")
    item = items[args.index]
    policy = build_policy(cfg, [item])
    traj = run_episode(
        item.video, item.query, policy, cfg.limits, _reflector(cfg),
        seed=args.seed, profile=PROFILES[cfg.profile],
    )
    traj = _stamp(replace(traj, reward=total_reward(traj, weights=cfg.rewards).to_dict()), cfg, item.video)
    out = run_dir(args.out, cfg, "run-episode")
    write_jsonl(out / "trajectories.jsonl", [_traj_record(traj)])
    return {
        "run_dir": str(out),
        "outcome": traj.outcome,
        "final_answer": traj.final_answer,
        "answer_gt": item.query.answer_gt,
        "rounds": len(traj.rounds),
        "tokens": traj.tokens_spent,
        "reward": traj.reward,
    }


def _train_sft(args, cfg: RunConfig, out: Path) -> dict:
    t = cfg.trainer.sft
    items = load_items(args.items, cfg, "sft")
    corpus = build_sft_corpus(
        items, make_teachers(t.teachers), limits=cfg.limits, seed=cfg.seeds.train
    )
    write_jsonl(out / "data" / "sft" / "corpus.jsonl", (ex.to_dict() for ex in corpus.examples))
    write_json(out / "data" / "sft" / "experience_bank.json", corpus.bank.to_dict())
    res = run_sft(corpus.examples, epochs=t.epochs, lr=t.lr, batch_size=t.batch_size, seed=cfg.seeds.train)
    ckpt = out / "checkpoints" / "sft.json"
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    _save_checkpoint(res.params, ckpt, cfg, "sft", epoch_losses=res.epoch_losses)
    from .plotting import plot_losses

    plot_losses(res.epoch_losses, out / "sft_loss.png", "SFT cross-entropy")
    return {"checkpoint": str(ckpt), "examples": len(corpus.examples), "epoch_losses": res.epoch_losses}


def _train_kto(args, cfg: RunConfig, out: Path) -> dict:
    t = cfg.trainer.kto
    if not args.init:
        raise CliError("train kto needs --init <sft checkpoint>")
    reference = ToyPolicyParams.load(args.init)
    if args.examples:
        examples = read_jsonl(args.examples, KtoExample.from_dict)
    else:
        items = load_items(args.items, cfg, "kto")
        rollouts = sample_trajectories(
            reference, items, t.samples_per_query, cfg.seeds.kto, cfg.limits, cfg.rewards
        )
        # teacher runs on the same queries supply chosen examples, as in the full pipeline
        teacher_runs = build_sft_corpus(
            items, make_teachers(cfg.trainer.sft.teachers), limits=cfg.limits, seed=cfg.seeds.kto
        ).trajectories
        examples = label_kto(rollouts + teacher_runs, KtoRules(t.chosen_threshold, seed=cfg.seeds.kto))
    write_jsonl(out / "data" / "kto" / "examples.jsonl", (ex.to_dict() for ex in examples))
    res = run_kto(
        examples, reference, beta=t.beta, lr=t.lr, epochs=t.epochs,
        batch_size=t.batch_size, seed=cfg.seeds.kto,
    )
    ckpt = out / "checkpoints" / "kto.json"
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    _save_checkpoint(res.params, ckpt, cfg, "kto", reference=str(args.init), epoch_losses=res.epoch_losses)
    from .plotting import plot_losses

    plot_losses(res.epoch_losses, out / "kto_loss.png", "KTO loss")
    chosen = sum(ex.label == "chosen" for ex in examples)
    return {"checkpoint": str(ckpt), "examples": len(examples), "chosen": chosen}


def _train_grpo(args, cfg: RunConfig, out: Path) -> dict:
    t = cfg.trainer.grpo
    init = ToyPolicyParams.load(args.init) if args.init else ToyPolicyParams.zeros()
    reference = ToyPolicyParams.load(args.reference) if args.reference else init.copy()
    items = load_items(args.items, cfg, "rl")
    write_jsonl(out / "data" / "rl" / "items.jsonl", (it.to_dict() for it in items))
    gcfg = GrpoConfig(
        steps=args.steps if args.steps is not None else t.steps,
        group_size=t.group_size,
        queries_per_step=t.queries_per_step,
        kl_coef=t.kl_coef,
        lr=t.lr,
        advantage=t.advantage,
        seed=cfg.seeds.train,
    )
    res = run_grpo(
        items, init, reference, gcfg, limits=cfg.limits, weights=cfg.rewards,
        curve_path=out / "curve.csv",
    )
    enhanced_steps = 0
    if t.enhance_after:
        more = enhance_and_retrain(
            res.params, reference, items, gcfg, t.enhance_after, cfg.data.n_enhance,
            seed=cfg.seeds.enhance, limits=cfg.limits, weights=cfg.rewards, config=cfg.generator,
        )
        write_curve(more.curve, out / "curve_enhanced.csv")
        res = replace(more, curve=res.curve + [{**r, "step": r["step"] + gcfg.steps} for r in more.curve])
        enhanced_steps = t.enhance_after
    ckpt = out / "checkpoints" / "grpo.json"
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    _save_checkpoint(
        res.params, ckpt, cfg, "grpo", step=gcfg.steps + enhanced_steps,
        reference=str(args.reference or args.init or "zeros"),
        degenerate_groups=res.degenerate_groups,
    )
    from .plotting import plot_curve

    plot_curve(res.curve, out / "curve.png")
    last = res.curve[-50:]
    return {
        "checkpoint": str(ckpt),
        "steps": gcfg.steps,
        "enhanced_steps": enhanced_steps,
        "final_reward_mean": sum(r["reward_mean"] for r in last) / max(1, len(last)),
        "final_kl": sum(r["kl"] for r in last) / max(1, len(last)),
        "degenerate_groups": res.degenerate_groups,
    }


def cmd_train(args, cfg: RunConfig) -> dict:
    out = run_dir(args.out, cfg, f"train-{args.stage}")
    handler = {"sft": _train_sft, "kto": _train_kto, "grpo": _train_grpo}[args.stage]
    return {"run_dir": str(out), **handler(args, cfg, out)}


def cmd_enhance(args, cfg: RunConfig) -> dict:
    failures = [
        t for t in read_jsonl(args.trajectories, Trajectory.from_dict)
        if not (t.reward or total_reward(t, weights=cfg.rewards).to_dict())["correct"]
    ]
    n = args.n if args.n is not None else cfg.data.n_enhance
    base = cfg.seeds.enhance * 1_000_003
    pool = [generate_video(base + i, cfg.generator) for i in range(n)]
    items = enhance_dataset(failures, pool, cfg.seeds.enhance, n)
    out = run_dir(args.out, cfg, "enhance")
    write_jsonl(out / "data" / "rl" / "enhanced.jsonl", (it.to_dict() for it in items))
    templates = {}
    for it in items:
        templates[it.query.template] = templates.get(it.query.template, 0) + 1
    return {
        "run_dir": str(out),
        "failures": len(failures),
        "failure_templates": dict(failure_counts(failures)),
        "new_queries": len(items),
        "templates": templates,
    }


def cmd_evaluate(args, cfg: RunConfig) -> dict:
    items = load_items(args.items, cfg, "eval")
    policy = build_policy(cfg, items)
    report = evaluate(
        policy, items, cfg.limits, reflector=_reflector(cfg), weights=cfg.rewards,
        profile=PROFILES[cfg.profile], seed=cfg.seeds.run, workers=args.workers,
    )
    out = run_dir(args.out, cfg, "evaluate")
    by_id = {it.video.video_id: it.video for it in items}
    write_jsonl(
        out / "trajectories.jsonl",
        (_traj_record(_stamp(t, cfg, by_id[t.video_id])) for t in report.trajectories),
    )
    summary = {**report.to_dict(), "policy": getattr(policy, "name", cfg.policy.kind)}
    summary["config_hash"] = cfg.hash()
    summary["seed"] = cfg.seeds.run
    write_json(out / "report.json", summary)
    return {"run_dir": str(out), **summary}


def cmd_score(args, cfg: RunConfig) -> dict:
    trajs = read_jsonl(args.trajectories, Trajectory.from_dict)
    judge = EvidenceJudge()
    weights = RewardWeights(cfg.rewards.w_acc, cfg.rewards.w_fmt)
    rows = []
    for t in trajs:
        rb = total_reward(t, judge, weights)
        rows.append({"video_id": t.video_id, "query_id": t.query.query_id, "seed": t.seed, **rb.to_dict()})
    out = run_dir(args.out, cfg, "score")
    write_jsonl(out / "rewards.jsonl", rows)
    total = sum(r["total"] for r in rows)
    return {"run_dir": str(out), "n": len(rows), "mean_reward": total / max(1, len(rows))}


def cmd_stats(args, cfg: RunConfig) -> dict:
    trajs = read_jsonl(args.trajectories, Trajectory.from_dict)
    stats = compute_round_stats(trajs, PROFILES[cfg.profile])
    out = Path(args.dest) if args.dest else run_dir(args.out, cfg, "stats")
    out.mkdir(parents=True, exist_ok=True)
    (out / "round_stats.csv").write_text(stats.to_csv())
    (out / "round_stats.json").write_text(stats.to_json() + "\n")
    figure = None
    if not args.no_plot:
        from .plotting import plot_round_stats

        figure = str(plot_round_stats(stats, out / "round_stats.png"))
    if args.print:
        sys.stdout.write(stats.to_csv())
    return {"run_dir": str(out), "rounds": sorted(stats.rounds), "figure": figure}


def replay_trajectory(traj: Trajectory) -> dict:
    """Recompute the reward and, when the video is stored, re-execute every call."""
    rb = total_reward(traj).to_dict()
    stored = traj.reward
    frames_ok = None
    video = traj.meta.get("video")
    if video is not None:
        v = SyntheticVideo.from_dict(video)
        frames_ok = all(
            execute(b.call, v).observations == b.observations for b in traj.frame_batches
        )
    return {
        "video_id": traj.video_id,
        "seed": traj.seed,
        "reward": rb,
        "reward_match": stored is None or RewardBreakdown.from_dict(stored) == RewardBreakdown.from_dict(rb),
        "frames_match": frames_ok,
    }


def cmd_replay(args, cfg: RunConfig) -> dict:
    trajs = read_jsonl(args.trajectories, Trajectory.from_dict)
    rows = [replay_trajectory(t) for t in trajs]
    bad = [r for r in rows if not r["reward_match"] or r["frames_match"] is False]
    out = run_dir(args.out, cfg, "replay")
    write_jsonl(out / "replay.jsonl", rows)
    if bad:
        raise CliError(f"{len(bad)} of {len(rows)} trajectories did not replay identically")
    return {"run_dir": str(out), "n": len(rows), "mismatches": 0}


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vidagent", description=__doc__)
    p.add_argument("--config", help="YAML run configuration (defaults apply when omitted)")
    p.add_argument("--out", default="runs", help="parent directory for run directories")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate videos and queries for each split")
    g.add_argument("--splits", nargs="+", choices=SPLITS, default=list(SPLITS))

    def policy_flags(sp):
        sp.add_argument("--policy", choices=("toy", "direct-dense", "global-then-zoom", "random", "empty", "oracle", "chat"))
        sp.add_argument("--checkpoint", help="toy-policy checkpoint JSON")
        sp.add_argument("--greedy", action="store_true", help="argmax instead of sampling")
        sp.add_argument("--endpoint", help="chat-completions URL for --policy chat")
        sp.add_argument("--reflector", choices=("none", "lenient", "strict"))
        sp.add_argument("--profile", choices=sorted(PROFILES))

    e = sub.add_parser("run-episode", help="run one episode and store its trajectory")
    e.add_argument("--items", help="items JSONL (default: generated eval split)")
    e.add_argument("--index", type=int, default=0)
    e.add_argument("--seed", type=int, default=0)
    policy_flags(e)

    t = sub.add_parser("train", help="train one stage")
    t.add_argument("stage", choices=("sft", "kto", "grpo"))
    t.add_argument("--init", help="starting checkpoint (KTO: also the reference)")
    t.add_argument("--reference", help="GRPO reference checkpoint (default: --init)")
    t.add_argument("--items", help="items JSONL for this stage (default: generated split)")
    t.add_argument("--examples", help="KTO examples JSONL (skips rollout labelling)")
    t.add_argument("--steps", type=int, help="override GRPO steps")

    n = sub.add_parser("enhance", help="synthesise new queries weighted by failures")
    n.add_argument("--trajectories", required=True)
    n.add_argument("--n", type=int)

    v = sub.add_parser("evaluate", help="evaluate a policy on a query set")
    v.add_argument("--items")
    v.add_argument("--workers", type=int, default=1)
    policy_flags(v)

    s = sub.add_parser("score", help="recompute reward breakdowns for stored trajectories")
    s.add_argument("--trajectories", required=True)

    st = sub.add_parser("stats", help="per-round tool-call statistics (CSV, JSON, figure)")
    st.add_argument("--trajectories", required=True)
    st.add_argument("--dest", help="write here instead of a new run directory")
    st.add_argument("--no-plot", action="store_true")
    st.add_argument("--print", action="store_true", help="also print the CSV to stdout")

    r = sub.add_parser("replay", help="check stored trajectories replay bit-identically")
    r.add_argument("--trajectories", required=True)
    return p


COMMANDS = {
    "gen-data": cmd_gen_data,
    "run-episode": cmd_run_episode,
    "train": cmd_train,
    "enhance": cmd_enhance,
    "evaluate": cmd_evaluate,
    "score": cmd_score,
    "stats": cmd_stats,
    "replay": cmd_replay,
}


def _fail(exc: Exception, code: int) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(message)s",
    )
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        result = COMMANDS[args.command](args, cfg)
    except (ConfigError, FileNotFoundError) as exc:
        return _fail(exc, 2)
    except (CliError, ValueError, UnknownQuestion, RuntimeError) as exc:
        return _fail(exc, 1)
    if not getattr(args, "print", False):
        sys.stdout.write(json.dumps(result, sort_keys=True, default=str) + "\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
