"""The frame_select tool: validation, uniform midpoint sampling and cost accounting."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from fractions import Fraction

from .video import FrameObservation, SyntheticVideo, observe

TOOL_NAME = "frame_select"
ARGUMENTS = ("start_time", "end_time", "nframes", "resize")


@dataclass(frozen=True)
class TokenProfile:
    name: str
    base_tokens_per_frame: int

    def __post_init__(self):
        if self.base_tokens_per_frame <= 0:
            raise ValueError("base_tokens_per_frame must be positive")


PROFILES = {
    "gemini": TokenProfile("gemini", 258),
    "longva": TokenProfile("longva", 144),
    "longvila": TokenProfile("longvila", 256),
    "qwen": TokenProfile("qwen", 650),
}
QWEN = PROFILES["qwen"]


@dataclass(frozen=True)
class FrameSelectCall:
    start_time: float
    end_time: float
    nframes: int
    resize: float

    @property
    def window(self) -> float:
        return self.end_time - self.start_time

    @property
    def fps(self) -> float:
        return self.nframes / self.window

    @property
    def visual_budget(self) -> float:
        return visual_budget(self)

    def to_arguments(self) -> dict:
        return {
            "start_time": self.start_time,
            "end_time": self.end_time,
            "nframes": self.nframes,
            "resize": self.resize,
        }

    def envelope(self) -> str:
        return json.dumps({"tool": TOOL_NAME, "arguments": self.to_arguments()})

    @classmethod
    def from_arguments(cls, args: dict) -> "FrameSelectCall":
        return cls(
            start_time=args["start_time"],
            end_time=args["end_time"],
            nframes=int(args["nframes"]),
            resize=args["resize"],
        )


@dataclass(frozen=True)
class Violation:
    code: str
    field: str
    message: str


class InvalidCall(ValueError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(f"{v.code}({v.field}): {v.message}" for v in violations))


def validate(call: FrameSelectCall, duration_s: float) -> list[Violation]:
    """Every violated invariant of ``call``; an empty list means the call is ok."""
    out = []
    if call.start_time < 0:
        out.append(Violation("OutOfRange", "start_time", "start_time < 0"))
    if call.end_time > duration_s:
        out.append(Violation("OutOfRange", "end_time", f"end_time > duration {duration_s:g}"))
    if call.start_time >= call.end_time:
        out.append(Violation("EmptyWindow", "end_time", "start_time must be < end_time"))
    if not isinstance(call.nframes, int) or call.nframes < 1:
        out.append(Violation("BadFrameCount", "nframes", "nframes must be an integer >= 1"))
    if not 0 < call.resize <= 1:
        out.append(Violation("BadResize", "resize", "resize must lie in (0, 1]"))
    return out


@dataclass(frozen=True)
class FrameBatch:
    call: FrameSelectCall
    timestamps: tuple[float, ...]
    observations: tuple[FrameObservation, ...]
    fps: float
    visual_budget: float
    token_cost: int

    def to_dict(self) -> dict:
        return {
            "call": self.call.to_arguments(),
            "timestamps": list(self.timestamps),
            "observations": [o.to_dict() for o in self.observations],
            "fps": self.fps,
            "visual_budget": self.visual_budget,
            "token_cost": self.token_cost,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FrameBatch":
        return cls(
            call=FrameSelectCall.from_arguments(d["call"]),
            timestamps=tuple(d["timestamps"]),
            observations=tuple(FrameObservation.from_dict(o) for o in d["observations"]),
            fps=d["fps"],
            visual_budget=d["visual_budget"],
            token_cost=d["token_cost"],
        )


def sample_timestamps(call: FrameSelectCall) -> list[float]:
    step = (call.end_time - call.start_time) / call.nframes
    return [call.start_time + (i + 0.5) * step for i in range(call.nframes)]


@lru_cache(maxsize=4096)
def _ratio(x: float) -> Fraction:
    # decimal literal semantics: 0.2 means 1/5, not its binary neighbour
    return Fraction(repr(float(x))).limit_denominator(10**9)


def tokens_per_frame(resize: float, profile: TokenProfile = QWEN) -> int:
    return math.ceil(profile.base_tokens_per_frame * _ratio(resize) ** 2)


def token_cost(call: FrameSelectCall, profile: TokenProfile = QWEN) -> int:
    return call.nframes * tokens_per_frame(call.resize, profile)


def visual_budget(call: FrameSelectCall) -> float:
    return call.nframes * call.resize


def execute(
    call: FrameSelectCall, video: SyntheticVideo, profile: TokenProfile = QWEN
) -> FrameBatch:
    violations = validate(call, video.duration_s)
    if violations:
        raise InvalidCall(violations)
    timestamps = sample_timestamps(call)
    return FrameBatch(
        call=call,
        timestamps=tuple(timestamps),
        observations=tuple(observe(video, timestamps, call.resize)),
        fps=call.fps,
        visual_budget=visual_budget(call),
        token_cost=token_cost(call, profile),
    )
