"""Scripted teacher workflows and reference baselines."""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from ..evidence import UnknownQuestion, answer_from_batches, ranked_answers, read
from ..frametool import FrameSelectCall
from ..runtime import BeliefState
from ..video import SyntheticVideo, exhaustive_observation
from .base import PolicyOutput, answer_output, call_output


def _best_answer(state: BeliefState) -> str:
    try:
        return ranked_answers(state.q, state.batches)[0]
    except UnknownQuestion:
        return "unknown"


def _cap(duration: float) -> int:
    return max(1, math.floor(duration))


class DirectDense:
    """One dense full-span call, then answer."""

    def __init__(self, nframes: int = 32, resize: float = 0.5, name: str = "direct-dense"):
        self.nframes = nframes
        self.resize = resize
        self.name = name

    def act(self, state: BeliefState, seed: int) -> PolicyOutput:
        if not state.batches:
            D = state.duration_s
            call = FrameSelectCall(0.0, D, min(self.nframes, _cap(D)), self.resize)
            return call_output(
                state,
                call,
                f"The answer may need detail from anywhere, so sample the entire {D:g} s video densely.",
                "Without frames any answer would be a guess.",
            )
        return answer_output(state, _best_answer(state))


class GlobalThenZoom:
    """Coarse overview, then a sharper look where the evidence points, then answer.

    When the overview finds nothing relevant the follow-up is a denser global
    scan rather than a guessed segment.
    """

    def __init__(
        self,
        global_nframes: int = 16,
        global_resize: float = 0.25,
        zoom_resize: float = 1.0,
        max_zoom_frames: int = 32,
        name: str = "global-then-zoom",
    ):
        self.global_nframes = global_nframes
        self.global_resize = global_resize
        self.zoom_resize = zoom_resize
        self.max_zoom_frames = max_zoom_frames
        self.name = name

    def _zoom(self, state: BeliefState, focus) -> FrameSelectCall:
        D = state.duration_s
        pad = D / self.global_nframes
        a, b = focus
        try:
            if read(state.q, []).focus is not None:
                pad = 0.0  # the question names the window itself
        except UnknownQuestion:
            pass
        a, b = max(0.0, a - pad), min(D, b + pad)
        if b - a < 1:
            a, b = max(0.0, a - 1), min(D, b + 1)
        n = min(self.max_zoom_frames, max(1, math.floor(b - a)))
        return FrameSelectCall(a, b, n, self.zoom_resize)

    def act(self, state: BeliefState, seed: int) -> PolicyOutput:
        D = state.duration_s
        if not state.batches:
            call = FrameSelectCall(0.0, D, min(self.global_nframes, _cap(D)), self.global_resize)
            return call_output(
                state,
                call,
                "Get a brief low-resolution overview of the whole video first.",
                "Nothing has been observed yet.",
            )
        if len(state.batches) == 1:
            try:
                reading = read(state.q, state.batches)
            except UnknownQuestion:
                reading = None
            if reading is not None and reading.found_info and reading.focus:
                call = self._zoom(state, reading.focus)
                return call_output(
                    state,
                    call,
                    "Zoom in on the segment the overview points to, at higher resolution.",
                    "The overview is too coarse to be sure.",
                )
            n = min(3 * self.global_nframes, _cap(D))
            call = FrameSelectCall(0.0, D, n, max(0.5, self.global_resize))
            return call_output(
                state,
                call,
                "The overview found nothing relevant; rescan the whole video more densely and sharply.",
                "A random segment would be a guess.",
            )
        return answer_output(state, _best_answer(state))


class RandomGuess:
    """Answers immediately with a uniformly random candidate."""

    def __init__(self, name: str = "random-guess"):
        self.name = name

    def act(self, state: BeliefState, seed: int) -> PolicyOutput:
        try:
            options = ranked_answers(state.q, [])
        except UnknownQuestion:
            options = ["unknown"]
        rng = np.random.default_rng(seed)
        return answer_output(state, options[int(rng.integers(len(options)))], "Guessing.")


class EmptyAnswer:
    name = "empty-answer"

    def act(self, state: BeliefState, seed: int) -> PolicyOutput:
        return answer_output(state, "", "No answer.")


class OraclePolicy:
    """Answers from exhaustive observation of the true video (test baseline)."""

    def __init__(self, videos: Mapping[str, SyntheticVideo], name: str = "oracle"):
        self.videos = dict(videos)
        self.name = name

    def act(self, state: BeliefState, seed: int) -> PolicyOutput:
        video = self.videos[state.video_id]
        return answer_output(state, answer_from_batches(state.q, exhaustive_observation(video)))
