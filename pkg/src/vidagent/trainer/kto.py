"""Preference optimisation from single-sample chosen/rejected labels."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..policy.toy import ToyPolicyParams, batch_logprobs, score_grad
from .data import CHOSEN, REJECTED, KtoExample
from .optim import Adam

log = logging.getLogger(__name__)


class SingleLabelCorpus(ValueError):
    pass


@dataclass
class _Flat:
    phi: np.ndarray
    actions: np.ndarray
    slots: np.ndarray
    owner: np.ndarray  # example index of each step


def _flatten(examples: Sequence[KtoExample]) -> _Flat:
    phi, actions, slots, owner = [], [], [], []
    for i, ex in enumerate(examples):
        for st in ex.steps:
            phi.append(st["features"])
            actions.append(st["action"])
            slots.append(st["n_slots"])
            owner.append(i)
    return _Flat(
        np.array(phi, dtype=float).reshape(-1, len(phi[0]) if phi else 0),
        np.array(actions, dtype=int),
        np.array(slots, dtype=int),
        np.array(owner, dtype=int),
    )


def log_ratios(
    params: ToyPolicyParams, reference: ToyPolicyParams, examples: Sequence[KtoExample]
) -> np.ndarray:
    """Per-example trajectory log-prob under ``params`` minus under ``reference``."""
    if not examples:
        return np.zeros(0)
    flat = _flatten(examples)
    lp, _, _ = batch_logprobs(params.theta, params.space, flat.phi, flat.actions, flat.slots)
    lr, _, _ = batch_logprobs(reference.theta, reference.space, flat.phi, flat.actions, flat.slots)
    return np.bincount(flat.owner, weights=lp - lr, minlength=len(examples))


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def kto_loss_and_grad(
    params: ToyPolicyParams,
    reference: ToyPolicyParams,
    examples: Sequence[KtoExample],
    beta: float = 0.1,
) -> tuple[float, np.ndarray, float]:
    """Mean (1 - v) over the batch, its gradient in theta, and the reference point z0."""
    flat = _flatten(examples)
    lp, logp, _ = batch_logprobs(params.theta, params.space, flat.phi, flat.actions, flat.slots)
    lr, _, _ = batch_logprobs(reference.theta, reference.space, flat.phi, flat.actions, flat.slots)
    ell = np.bincount(flat.owner, weights=lp - lr, minlength=len(examples))
    z0 = max(0.0, float(ell.mean()))  # held fixed: no gradient flows through it
    sign = np.array([1.0 if ex.label == CHOSEN else -1.0 for ex in examples])
    v = _sigmoid(beta * sign * (ell - z0))
    loss = float(np.mean(1.0 - v))
    dloss_dell = -beta * sign * v * (1 - v) / len(examples)
    grad = score_grad(flat.phi, flat.actions, logp, dloss_dell[flat.owner])
    return loss, grad, z0


@dataclass
class KtoResult:
    params: ToyPolicyParams
    epoch_losses: list[float] = field(default_factory=list)


def run_kto(
    examples: Sequence[KtoExample],
    reference: ToyPolicyParams,
    *,
    beta: float = 0.1,
    lr: float = 1e-3,
    epochs: int = 30,
    batch_size: int = 8,
    seed: int = 0,
) -> KtoResult:
    labels = {ex.label for ex in examples}
    if labels != {CHOSEN, REJECTED}:
        raise SingleLabelCorpus(f"KTO needs chosen and rejected examples, got {sorted(labels)}")
    params = reference.copy()
    opt = Adam(params.theta.shape, lr=lr)
    rng = np.random.default_rng(seed)
    losses = []
    for epoch in range(epochs):
        order = rng.permutation(len(examples))
        total = 0.0
        for lo in range(0, len(order), batch_size):
            batch = [examples[i] for i in order[lo : lo + batch_size]]
            loss, grad, _ = kto_loss_and_grad(params, reference, batch, beta)
            total += loss * len(batch)
            params.theta = opt.step(params.theta, grad)
        losses.append(total / len(examples))
        log.info("kto epoch %d loss %.5f", epoch + 1, losses[-1])
    return KtoResult(params, losses)
