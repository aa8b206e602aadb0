"""Run configuration: one YAML file, strictly validated, hashed into every artifact."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from ..frametool import PROFILES
from ..reflector import LENIENT, STRICT
from ..rewards import RewardWeights
from ..runtime import EpisodeLimits
from ..video import GeneratorConfig

POLICY_KINDS = ("toy", "direct-dense", "global-then-zoom", "random", "empty", "oracle", "chat")
REFLECTOR_MODES = ("none", LENIENT, STRICT)


class ConfigError(ValueError):
    pass


def _strict(cls, d: dict | None, where: str) -> dict:
    d = dict(d or {})
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    return d


@dataclass(frozen=True)
class Seeds:
    train: int = 1
    eval: int = 2
    kto: int = 3
    enhance: int = 4
    run: int = 0


@dataclass(frozen=True)
class DataConfig:
    n_sft: int = 300
    n_kto: int = 300
    n_rl: int = 1000
    n_eval: int = 200
    n_enhance: int = 200
    mc_every: int = 10
    rl_ratio: float = 0.9


@dataclass(frozen=True)
class SftConfig:
    epochs: int = 2
    lr: float = 1e-2
    batch_size: int = 8
    teachers: tuple[str, ...] = ("global-then-zoom", "direct-dense")


@dataclass(frozen=True)
class KtoConfig:
    beta: float = 0.1
    lr: float = 1e-3
    epochs: int = 30
    batch_size: int = 8
    chosen_threshold: float = 1.0
    samples_per_query: int = 2


@dataclass(frozen=True)
class GrpoSection:
    steps: int = 2000
    group_size: int = 8
    queries_per_step: int = 4
    kl_coef: float = 0.05
    lr: float = 1e-2
    advantage: str = "grpo"
    enhance_after: int = 0


@dataclass(frozen=True)
class TrainerConfig:
    sft: SftConfig = field(default_factory=SftConfig)
    kto: KtoConfig = field(default_factory=KtoConfig)
    grpo: GrpoSection = field(default_factory=GrpoSection)


@dataclass(frozen=True)
class PolicyConfig:
    kind: str = "toy"
    checkpoint: str | None = None
    greedy: bool = False
    nframes: int = 32
    resize: float = 0.5
    endpoint: str | None = None
    model: str = "default"
    timeout: float = 60.0


@dataclass(frozen=True)
class RunConfig:
    seeds: Seeds = field(default_factory=Seeds)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    limits: EpisodeLimits = field(default_factory=EpisodeLimits)
    rewards: RewardWeights = field(default_factory=RewardWeights)
    profile: str = "qwen"
    data: DataConfig = field(default_factory=DataConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    reflector: str = "none"

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ConfigError(f"unknown token profile {self.profile!r}; pick one of {sorted(PROFILES)}")
        if self.reflector not in REFLECTOR_MODES:
            raise ConfigError(f"reflector must be one of {REFLECTOR_MODES}")
        if self.policy.kind not in POLICY_KINDS:
            raise ConfigError(f"policy.kind must be one of {POLICY_KINDS}")

    @classmethod
    def from_dict(cls, d: dict | None) -> "RunConfig":
        d = _strict(cls, d, "config")
        tr = _strict(TrainerConfig, d.get("trainer"), "trainer")
        sft = _strict(SftConfig, tr.get("sft"), "trainer.sft")
        if "teachers" in sft:
            sft["teachers"] = tuple(sft["teachers"])
        gen = d.get("generator") or {}
        try:
            generator = GeneratorConfig.from_dict(gen)
            generator.validate()
            limits = EpisodeLimits(**_strict(EpisodeLimits, d.get("limits"), "limits"))
            rewards = RewardWeights(**_strict(RewardWeights, d.get("rewards"), "rewards"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return cls(
            seeds=Seeds(**_strict(Seeds, d.get("seeds"), "seeds")),
            generator=generator,
            limits=limits,
            rewards=rewards,
            profile=d.get("profile", "qwen"),
            data=DataConfig(**_strict(DataConfig, d.get("data"), "data")),
            trainer=TrainerConfig(
                sft=SftConfig(**sft),
                kto=KtoConfig(**_strict(KtoConfig, tr.get("kto"), "trainer.kto")),
                grpo=GrpoSection(**_strict(GrpoSection, tr.get("grpo"), "trainer.grpo")),
            ),
            policy=PolicyConfig(**_strict(PolicyConfig, d.get("policy"), "policy")),
            reflector=d.get("reflector", "none"),
        )

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def hash(self) -> str:
        return config_hash(self.to_dict())


def _plain(x: Any) -> Any:
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def config_hash(d: dict) -> str:
    blob = json.dumps(_plain(d), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return RunConfig.from_dict(raw)


def dump_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))
