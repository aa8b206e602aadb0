"""Behaviour cloning of teacher actions by minibatch cross-entropy."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..policy.toy import ToyPolicyParams, batch_logprobs, score_grad
from .optim import Adam

log = logging.getLogger(__name__)

# Settings used for a 7B multimodal model; kept as checkpoint metadata only.
LARGE_MODEL_SFT = {"epochs": 2, "batch_size": 8, "lr": 2e-6}


class EmptyCorpus(ValueError):
    pass


@dataclass(frozen=True)
class SftExample:
    features: tuple[float, ...]
    action: int
    n_slots: int
    source: str = "executor_teacher"
    experience_tags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "features": list(self.features),
            "action": self.action,
            "n_slots": self.n_slots,
            "source": self.source,
            "experience_tags": list(self.experience_tags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SftExample":
        return cls(
            features=tuple(d["features"]),
            action=int(d["action"]),
            n_slots=int(d["n_slots"]),
            source=d.get("source", "executor_teacher"),
            experience_tags=tuple(d.get("experience_tags", ())),
        )


@dataclass
class SftResult:
    params: ToyPolicyParams
    epoch_losses: list[float] = field(default_factory=list)


def _stack(corpus):
    phi = np.array([ex.features for ex in corpus], dtype=float)
    actions = np.array([ex.action for ex in corpus], dtype=int)
    slots = np.array([ex.n_slots for ex in corpus], dtype=int)
    return phi, actions, slots


def cross_entropy(params: ToyPolicyParams, corpus) -> float:
    phi, actions, slots = _stack(corpus)
    lp, _, _ = batch_logprobs(params.theta, params.space, phi, actions, slots)
    return float(-lp.mean())


def run_sft(
    corpus: list[SftExample],
    params: ToyPolicyParams | None = None,
    *,
    epochs: int = 2,
    lr: float = 1e-2,
    batch_size: int = 8,
    seed: int = 0,
) -> SftResult:
    if not corpus:
        raise EmptyCorpus("SFT needs at least one example")
    params = (params or ToyPolicyParams.zeros()).copy()
    phi, actions, slots = _stack(corpus)
    opt = Adam(params.theta.shape, lr=lr)
    rng = np.random.default_rng(seed)
    losses = []
    for epoch in range(epochs):
        order = rng.permutation(len(corpus))
        total = 0.0
        for lo in range(0, len(order), batch_size):
            idx = order[lo : lo + batch_size]
            lp, logp, _ = batch_logprobs(params.theta, params.space, phi[idx], actions[idx], slots[idx])
            total += float(-lp.sum())
            grad = -score_grad(phi[idx], actions[idx], logp, np.ones(len(idx))) / len(idx)
            params.theta = opt.step(params.theta, grad)
        losses.append(total / len(corpus))
        log.info("sft epoch %d loss %.4f", epoch + 1, losses[-1])
    return SftResult(params, losses)


def argmax_agreement(params: ToyPolicyParams, corpus: list[SftExample]) -> float:
    phi, actions, slots = _stack(corpus)
    _, logp, _ = batch_logprobs(params.theta, params.space, phi, actions, slots)
    return float(np.mean(np.argmax(logp, axis=1) == actions))
