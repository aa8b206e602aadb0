"""Discrete action space and state features for the parametric policy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..evidence import UnknownQuestion, ranked_answers, read
from ..frametool import FrameSelectCall
from ..runtime import AgentAction, BeliefState, ToolCall

FEATURES = ("bias", "round_index", "coverage", "distinct_labels", "budget_left", "found_info")
N_FEATURES = len(FEATURES)


def _default_windows() -> tuple[tuple[float, float], ...]:
    full = ((0.0, 1.0),)
    eighths = tuple((i / 8, (i + 1) / 8) for i in range(8))
    quarters = tuple((i / 4, (i + 1) / 4) for i in range(4))
    return full + eighths + quarters


class ActionNotInSpace(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteActionSpace:
    window_grid: tuple[tuple[float, float], ...] = field(default_factory=_default_windows)
    nframes_set: tuple[int, ...] = (4, 8, 16, 32)
    resize_set: tuple[float, ...] = (0.1, 0.25, 0.5, 1.0)
    answer_slots: int = 4

    @property
    def n_tool(self) -> int:
        return len(self.window_grid) * len(self.nframes_set) * len(self.resize_set)

    @property
    def n_actions(self) -> int:
        return self.n_tool + self.answer_slots

    def is_answer(self, index: int) -> bool:
        return index >= self.n_tool

    def slot(self, index: int) -> int:
        return index - self.n_tool

    def tool_index(self, w: int, f: int, r: int) -> int:
        return (w * len(self.nframes_set) + f) * len(self.resize_set) + r

    def unpack(self, index: int) -> tuple[int, int, int]:
        w, rest = divmod(index, len(self.nframes_set) * len(self.resize_set))
        f, r = divmod(rest, len(self.resize_set))
        return w, f, r

    def compose(self, index: int, duration: float) -> FrameSelectCall:
        if not 0 <= index < self.n_tool:
            raise ActionNotInSpace(f"{index} is not a tool action")
        w, f, r = self.unpack(index)
        a, b = self.window_grid[w]
        return FrameSelectCall(a * duration, b * duration, self.nframes_set[f], self.resize_set[r])

    def mask(self, n_slots: int) -> np.ndarray:
        m = np.zeros(self.n_actions, dtype=bool)
        m[: self.n_tool] = True
        m[self.n_tool : self.n_tool + min(n_slots, self.answer_slots)] = True
        return m

    def snap(self, call: FrameSelectCall, duration: float) -> int:
        """Nearest discrete tool action: best window IoU, then log-nearest nframes/resize."""

        def iou(win):
            a, b = win[0] * duration, win[1] * duration
            inter = max(0.0, min(b, call.end_time) - max(a, call.start_time))
            union = max(b, call.end_time) - min(a, call.start_time)
            return inter / union

        w = max(range(len(self.window_grid)), key=lambda i: (iou(self.window_grid[i]), -i))
        f = min(range(len(self.nframes_set)), key=lambda i: abs(math.log(self.nframes_set[i] / call.nframes)))
        r = min(range(len(self.resize_set)), key=lambda i: abs(math.log(self.resize_set[i] / call.resize)))
        return self.tool_index(w, f, r)

    def to_dict(self) -> dict:
        return {
            "window_grid": [list(w) for w in self.window_grid],
            "nframes_set": list(self.nframes_set),
            "resize_set": list(self.resize_set),
            "answer_slots": self.answer_slots,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteActionSpace":
        return cls(
            window_grid=tuple(tuple(w) for w in d["window_grid"]),
            nframes_set=tuple(d["nframes_set"]),
            resize_set=tuple(d["resize_set"]),
            answer_slots=d["answer_slots"],
        )


def _coverage(state: BeliefState) -> float:
    if not state.covered or state.duration_s <= 0:
        return 0.0
    total, cur_a, cur_b = 0.0, None, None
    for a, b in sorted(state.covered):
        if cur_b is None or a > cur_b:
            if cur_b is not None:
                total += cur_b - cur_a
            cur_a, cur_b = a, b
        else:
            cur_b = max(cur_b, b)
    total += cur_b - cur_a
    return min(1.0, total / state.duration_s)


@dataclass(frozen=True)
class StateView:
    features: np.ndarray
    answers: tuple[str, ...]
    found_info: bool


def featurize(state: BeliefState) -> StateView:
    try:
        reading = read(state.q, state.batches)
        found = reading.found_info
        n_labels = len(reading.detected)
        answers = tuple(ranked_answers(state.q, state.batches))
    except UnknownQuestion:
        labels = {l for ob in state.F_t for l in ob.labels}
        found, n_labels, answers = bool(labels), len(labels), tuple(sorted(labels)) or ("unknown",)
    left = 1.0 - state.tokens_spent / state.max_tokens if state.max_tokens else 0.0
    phi = np.array(
        [
            1.0,
            min(state.round_index, 5) / 5,
            _coverage(state),
            min(n_labels, 4) / 4,
            max(0.0, left),
            float(found),
        ]
    )
    return StateView(phi, answers, found)


def encode_action(
    space: DiscreteActionSpace, view: StateView, action: AgentAction, duration: float
) -> int:
    """Index of ``action`` in the space, snapping off-grid tool calls."""
    if isinstance(action, ToolCall):
        return space.snap(action.call, duration)
    if action.text in view.answers[: space.answer_slots]:
        return space.n_tool + view.answers.index(action.text)
    return space.n_tool
