"""Linear-softmax policy over the discrete action space, with exact gradients."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..runtime import BeliefState
from .actions import (
    N_FEATURES,
    ActionNotInSpace,
    DiscreteActionSpace,
    StateView,
    featurize,
)
from .base import PolicyOutput, answer_output, call_output


@dataclass
class ToyPolicyParams:
    theta: np.ndarray
    space: DiscreteActionSpace = field(default_factory=DiscreteActionSpace)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.shape != (N_FEATURES, self.space.n_actions):
            raise ValueError(f"theta must have shape {(N_FEATURES, self.space.n_actions)}")
        if not np.all(np.isfinite(self.theta)):
            raise ValueError("theta has non-finite entries")

    @classmethod
    def zeros(cls, space: DiscreteActionSpace | None = None) -> "ToyPolicyParams":
        space = space or DiscreteActionSpace()
        return cls(np.zeros((N_FEATURES, space.n_actions)), space)

    def copy(self) -> "ToyPolicyParams":
        return ToyPolicyParams(self.theta.copy(), self.space)

    def save(self, path: str | Path, meta: dict | None = None) -> None:
        path = Path(path)
        payload = {
            "format": "toy-policy-v1",
            "space": self.space.to_dict(),
            "theta": self.theta.tolist(),
            "meta": meta or {},
        }
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(json.dumps(payload))
        tmp.replace(path)

    @classmethod
    def load(cls, path: str | Path) -> "ToyPolicyParams":
        payload = json.loads(Path(path).read_text())
        return cls(np.array(payload["theta"]), DiscreteActionSpace.from_dict(payload["space"]))


def masked_log_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    z = np.where(mask, logits, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def masks_for(space: DiscreteActionSpace, n_slots: np.ndarray) -> np.ndarray:
    slots = np.arange(space.answer_slots)
    answer_ok = slots[None, :] < np.asarray(n_slots)[:, None]
    tools = np.ones((len(n_slots), space.n_tool), dtype=bool)
    return np.concatenate([tools, answer_ok], axis=1)


def distribution(params: ToyPolicyParams, phi: np.ndarray, n_slots: int) -> np.ndarray:
    logp = masked_log_softmax(phi @ params.theta, params.space.mask(n_slots))
    return np.exp(logp)


def logprob_from_features(
    params: ToyPolicyParams, phi: np.ndarray, action: int, n_slots: int
) -> tuple[float, np.ndarray]:
    mask = params.space.mask(n_slots)
    if not 0 <= action < params.space.n_actions or not mask[action]:
        raise ActionNotInSpace(f"action {action} is not available in this state")
    logp = masked_log_softmax(phi @ params.theta, mask)
    p = np.exp(logp)
    onehot = np.zeros_like(p)
    onehot[action] = 1.0
    return float(logp[action]), np.outer(phi, onehot - p)


def n_slots_of(view: StateView, space: DiscreteActionSpace) -> int:
    return min(len(view.answers), space.answer_slots)


def logprob_and_grad(
    params: ToyPolicyParams, state: BeliefState, action: int
) -> tuple[float, np.ndarray]:
    view = featurize(state)
    return logprob_from_features(params, view.features, action, n_slots_of(view, params.space))


def batch_logprobs(
    theta: np.ndarray, space: DiscreteActionSpace, phi: np.ndarray, actions: np.ndarray, n_slots: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-step log-probs, full log-distributions and masks for a stack of steps."""
    masks = masks_for(space, n_slots)
    logp = masked_log_softmax(phi @ theta, masks)
    return logp[np.arange(len(actions)), actions], logp, masks


def score_grad(phi: np.ndarray, actions: np.ndarray, logp: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Sum_i weights_i * d log pi(a_i | s_i) / d theta."""
    p = np.exp(logp)
    delta = -p * weights[:, None]
    delta[np.arange(len(actions)), actions] += weights
    return phi.T @ delta


class ToyPolicy:
    """Samples (or takes the argmax of) the linear-softmax distribution."""

    def __init__(self, params: ToyPolicyParams, greedy: bool = False, name: str = "toy"):
        self.params = params
        self.greedy = greedy
        self.name = name

    @property
    def space(self) -> DiscreteActionSpace:
        return self.params.space

    def act(self, state: BeliefState, seed: int) -> PolicyOutput:
        view = featurize(state)
        n_slots = n_slots_of(view, self.space)
        mask = self.space.mask(n_slots)
        logp = masked_log_softmax(view.features @ self.params.theta, mask)
        if self.greedy:
            idx = int(np.argmax(logp))
        else:
            rng = np.random.default_rng(seed)
            idx = int(rng.choice(len(logp), p=np.exp(logp)))
        step = {"features": view.features.tolist(), "action": idx, "n_slots": n_slots}
        lp = float(logp[idx])
        if self.space.is_answer(idx):
            answer = view.answers[self.space.slot(idx)]
            return answer_output(state, answer, logprob=lp, step=step)
        call = self.space.compose(idx, state.duration_s)
        plan = (
            f"Sample {call.nframes} frames from {call.start_time:g}s to {call.end_time:g}s "
            f"at resize {call.resize:g}."
        )
        return call_output(state, call, plan, logprob=lp, step=step)
