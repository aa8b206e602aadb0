"""Rule-based auditor for proposed frame_select calls.

Rules, checked in order:

* R1  a global scan found nothing and the next call jumps to an arbitrary
      sub-window: replace it with a denser, sharper global scan.
* R2  a focused call backed by earlier evidence keeps its window.
* R2b a segment already sampled at 1 fps is about to be densely re-sampled:
      search globally instead.
* R3  (strict mode) visual budget below 15: raise resize, then nframes.
* R4  fps above 1: cut nframes to the window length in seconds.
* R5  otherwise the call passes through unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .frametool import FrameSelectCall, validate, visual_budget

NO_CHANGE = "<NO_CHANGE>"
STRICT = "strict"
LENIENT = "lenient"

GLOBAL_COVERAGE = 0.9
SAME_SEGMENT_JACCARD = 0.5
MIN_BUDGET = 15.0
EPS = 1e-9


@dataclass(frozen=True)
class PreviousRound:
    call: FrameSelectCall
    found_info: bool


@dataclass(frozen=True)
class Verdict:
    decision: str
    corrected_call: FrameSelectCall | None = None
    triggered_rules: tuple[str, ...] = ()
    rationale: str = NO_CHANGE

    @property
    def changed(self) -> bool:
        return self.decision == "corrected"

    def to_dict(self) -> dict:
        return {
            "decision": self.decision,
            "corrected_call": self.corrected_call.to_arguments() if self.corrected_call else None,
            "triggered_rules": list(self.triggered_rules),
            "rationale": self.rationale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Verdict":
        cc = d.get("corrected_call")
        return cls(
            decision=d["decision"],
            corrected_call=FrameSelectCall.from_arguments(cc) if cc else None,
            triggered_rules=tuple(d["triggered_rules"]),
            rationale=d["rationale"],
        )


def is_global(call: FrameSelectCall, duration: float) -> bool:
    return call.window >= GLOBAL_COVERAGE * duration - EPS


def jaccard(a: FrameSelectCall, b: FrameSelectCall) -> float:
    inter = max(0.0, min(a.end_time, b.end_time) - max(a.start_time, b.start_time))
    union = max(a.end_time, b.end_time) - min(a.start_time, b.start_time)
    return inter / union if union > 0 else 0.0


def _fps_cap(call: FrameSelectCall) -> int:
    return max(1, math.floor(call.window + EPS))


def _widen(call: FrameSelectCall, length: float, duration: float) -> FrameSelectCall:
    """Grow the window symmetrically to ``length`` seconds, clamped to the video."""
    length = min(length, duration)
    mid = (call.start_time + call.end_time) / 2
    start = max(0.0, min(mid - length / 2, duration - length))
    return replace(call, start_time=start, end_time=start + length)


def _cap_fps(call: FrameSelectCall, duration: float) -> FrameSelectCall:
    if call.window < 1:
        call = _widen(call, 1.0, duration)
    return replace(call, nframes=_fps_cap(call))


def _lift_budget(call: FrameSelectCall, duration: float) -> FrameSelectCall:
    # never plan above 1 fps; R4 would undo it
    n = min(call.nframes, _fps_cap(call))
    if n < MIN_BUDGET:
        if _fps_cap(call) < MIN_BUDGET:
            call = _widen(call, MIN_BUDGET, duration)
        return replace(call, nframes=math.ceil(MIN_BUDGET), resize=1.0)
    return replace(call, nframes=n, resize=min(1.0, max(call.resize, MIN_BUDGET / n)))


def _global_scan(duration: float, nframes: int, resize: float) -> FrameSelectCall:
    cap = max(1, math.floor(duration + EPS))
    return FrameSelectCall(0.0, float(duration), min(nframes, cap), resize)


def _pass(
    prev: PreviousRound | None, proposed: FrameSelectCall, D: float, mode: str
) -> tuple[FrameSelectCall, list[str], list[str]]:
    """One sweep over the rules in order."""
    call = proposed
    rules: list[str] = []
    notes: list[str] = []

    if prev is not None and not is_global(proposed, D):
        if is_global(prev.call, D) and not prev.found_info:
            n = max(3 * prev.call.nframes, proposed.nframes)
            r = max(prev.call.resize, proposed.resize, 0.5)
            call = _global_scan(D, n, r)
            rules.append("R1")
            notes.append(
                "The global scan found nothing; instead of guessing a segment, "
                f"rescan globally with nframes={call.nframes} and resize={call.resize:g}."
            )
        elif (
            not prev.found_info
            and prev.call.fps >= 1 - EPS
            and proposed.fps >= 1 - EPS
            and jaccard(prev.call, proposed) >= SAME_SEGMENT_JACCARD
        ):
            n = max(proposed.nframes, math.ceil(MIN_BUDGET / 0.5))
            call = _global_scan(D, n, max(proposed.resize, 0.5))
            rules.append("R2b")
            notes.append(
                "This segment was already sampled at 1 fps; search the whole video "
                "with higher density and resolution instead."
            )

    too_dense = call.fps > 1 + EPS
    capped = _cap_fps(call, D) if too_dense else call
    if mode == STRICT and visual_budget(capped) < MIN_BUDGET - EPS:
        call = _lift_budget(call, D)
        rules.append("R3")
        notes.append(f"Visual budget raised to {visual_budget(call):g} (minimum {MIN_BUDGET:g}).")
        if too_dense:
            rules.append("R4")
            notes.append(f"fps capped at 1 with nframes={call.nframes}.")
    elif too_dense:
        call = capped
        rules.append("R4")
        notes.append(f"fps capped at 1 by reducing nframes to {call.nframes}.")
    return call, rules, notes


def audit(
    prev: PreviousRound | None,
    proposed: FrameSelectCall,
    video_duration: float,
    mode: str = LENIENT,
) -> Verdict:
    if mode not in (STRICT, LENIENT):
        raise ValueError(f"unknown reflector mode {mode!r}")
    D = video_duration
    call = proposed
    rules: list[str] = []
    notes: list[str] = []
    # a correction can itself trip an earlier rule (a widened window may now
    # overlap the previous dense segment), so sweep until nothing fires
    for _ in range(4):
        new, fired, said = _pass(prev, call, D, mode)
        if not fired or new == call:
            break
        call = new
        rules += [r for r in fired if r not in rules]
        notes += said

    if not rules or call == proposed:
        return Verdict("no_change", None, (), NO_CHANGE)
    assert not validate(call, D), validate(call, D)
    return Verdict("corrected", call, tuple(rules), " ".join(notes))


class Reflector:
    """Callable wrapper that fixes the audit mode."""

    def __init__(self, mode: str = LENIENT):
        if mode not in (STRICT, LENIENT):
            raise ValueError(f"unknown reflector mode {mode!r}")
        self.mode = mode

    def __call__(self, prev, proposed, video_duration) -> Verdict:
        return audit(prev, proposed, video_duration, self.mode)
