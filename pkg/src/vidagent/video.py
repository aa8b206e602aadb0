"""Synthetic video environment with a verifiable event timeline.

Videos are symbolic: a duration plus a list of non-overlapping events, each
with the minimum spatial resolution (and, for motion events, the minimum
temporal density) needed to perceive it. Observations return event labels
only, so every sampling decision has an exact, checkable consequence.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

STATIC = "static"
MOTION = "motion"
OPEN_ENDED = "open_ended"
MULTIPLE_CHOICE = "multiple_choice"

TEMPLATES = ("identification", "counting", "ordering", "windowed")

LABELS = (
    "door opens",
    "door closes",
    "dog runs",
    "car passes",
    "person waves",
    "ball is kicked",
    "light turns on",
    "light turns off",
    "bird lands",
    "cup falls",
    "man sits down",
    "crowd cheers",
)

RESIZE_GRID = (0.1, 0.25, 0.5, 1.0)
DENSITY_GRID = (0.0, 0.25, 0.5, 1.0)


class VideoError(ValueError):
    pass


class InvalidParams(VideoError):
    pass


class NoEvents(VideoError):
    pass


class OutOfRange(VideoError):
    pass


@dataclass(frozen=True)
class Event:
    id: int
    window: tuple[float, float]
    label: str
    min_resize: float
    min_density_fps: float
    kind: str = STATIC

    def __post_init__(self):
        start, end = self.window
        if not 0 <= start < end:
            raise InvalidParams(f"event {self.id}: bad window {self.window}")
        if not 0 < self.min_resize <= 1:
            raise InvalidParams(f"event {self.id}: min_resize must lie in (0, 1]")
        if self.kind == STATIC and self.min_density_fps != 0:
            raise InvalidParams(f"event {self.id}: static events have min_density_fps = 0")
        if self.kind == MOTION and self.min_density_fps <= 0:
            raise InvalidParams(f"event {self.id}: motion events need min_density_fps > 0")
        if self.kind not in (STATIC, MOTION):
            raise InvalidParams(f"event {self.id}: unknown kind {self.kind!r}")

    @property
    def start(self) -> float:
        return self.window[0]

    @property
    def end(self) -> float:
        return self.window[1]

    @property
    def length(self) -> float:
        return self.window[1] - self.window[0]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Event":
        return cls(
            id=int(d["id"]),
            window=(d["window"][0], d["window"][1]),
            label=d["label"],
            min_resize=d["min_resize"],
            min_density_fps=d["min_density_fps"],
            kind=d["kind"],
        )


@dataclass(frozen=True)
class SyntheticVideo:
    duration_s: float
    native_resolution: tuple[int, int]
    events: tuple[Event, ...]
    seed: int

    def __post_init__(self):
        if self.duration_s <= 0:
            raise InvalidParams("duration_s must be positive")
        for ev in self.events:
            if ev.end > self.duration_s:
                raise InvalidParams(f"event {ev.id} ends after the video")

    @cached_property
    def video_id(self) -> str:
        digest = hashlib.sha256(self.to_json().encode()).hexdigest()[:8]
        return f"v{self.seed}-{digest}"

    @property
    def labels(self) -> list[str]:
        return [ev.label for ev in self.events]

    def to_dict(self) -> dict:
        return {
            "duration_s": self.duration_s,
            "native_resolution": list(self.native_resolution),
            "events": [ev.to_dict() for ev in self.events],
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticVideo":
        return cls(
            duration_s=d["duration_s"],
            native_resolution=tuple(d["native_resolution"]),
            events=tuple(Event.from_dict(e) for e in d["events"]),
            seed=int(d["seed"]),
        )


@dataclass(frozen=True)
class QueryInstance:
    question: str
    answer_gt: str
    query_kind: str
    choices: tuple[tuple[str, str], ...] | None = None
    evidence_windows: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.query_kind == MULTIPLE_CHOICE:
            if not self.choices or len(self.choices) < 2:
                raise InvalidParams("multiple-choice queries need at least 2 choices")
            if self.answer_gt not in {letter for letter, _ in self.choices}:
                raise InvalidParams("answer_gt must be one of the choice letters")
        elif self.query_kind != OPEN_ENDED:
            raise InvalidParams(f"unknown query kind {self.query_kind!r}")

    @property
    def query_id(self) -> str:
        return "q-" + hashlib.sha256(self.to_json().encode()).hexdigest()[:10]

    @property
    def template(self) -> str:
        from .evidence import parse_question

        return parse_question(self.question).template

    def render(self) -> str:
        """Question text as shown to the agent (choices on their own lines)."""
        lines = [self.question]
        if self.choices:
            lines += [f"{letter}: {text}" for letter, text in self.choices]
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "answer_gt": self.answer_gt,
            "query_kind": self.query_kind,
            "choices": [list(c) for c in self.choices] if self.choices else None,
            "evidence_windows": [list(w) for w in self.evidence_windows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "QueryInstance":
        choices = d.get("choices")
        return cls(
            question=d["question"],
            answer_gt=d["answer_gt"],
            query_kind=d["query_kind"],
            choices=tuple((c[0], c[1]) for c in choices) if choices else None,
            evidence_windows=tuple((w[0], w[1]) for w in d.get("evidence_windows", ())),
        )


@dataclass(frozen=True)
class FrameObservation:
    timestamp: float
    resize: float
    labels: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"timestamp": self.timestamp, "resize": self.resize, "labels": list(self.labels)}

    @classmethod
    def from_dict(cls, d: dict) -> "FrameObservation":
        return cls(timestamp=d["timestamp"], resize=d["resize"], labels=tuple(d["labels"]))


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs for :func:`generate_video`. Ranges are inclusive integer seconds."""

    duration_range: tuple[int, int] = (48, 96)
    event_count_range: tuple[int, int] = (2, 4)
    event_length_range: tuple[int, int] = (8, 20)
    min_gap_s: int = 2
    resize_choices: tuple[float, ...] = RESIZE_GRID
    density_choices: tuple[float, ...] = (0.25,)
    motion_prob: float = 0.25
    repeat_label_prob: float = 0.3
    labels: tuple[str, ...] = LABELS
    native_resolution: tuple[int, int] = (1280, 720)

    def validate(self) -> None:
        for name in ("duration_range", "event_count_range", "event_length_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise InvalidParams(f"{name} is inverted: {lo} > {hi}")
        if self.duration_range[0] <= 0:
            raise InvalidParams("duration_range must be positive")
        if self.event_count_range[0] < 0:
            raise InvalidParams("event_count_range must be non-negative")
        if self.event_length_range[0] < 1:
            raise InvalidParams("event_length_range must start at >= 1 s")
        if self.min_gap_s < 1:
            raise InvalidParams("min_gap_s must be >= 1")
        if not self.resize_choices or any(not 0 < r <= 1 for r in self.resize_choices):
            raise InvalidParams("resize_choices must be a non-empty subset of (0, 1]")
        if self.motion_prob > 0 and (
            not self.density_choices or any(not 0 < d <= 1 for d in self.density_choices)
        ):
            raise InvalidParams("density_choices must be a non-empty subset of (0, 1]")
        if not 0 <= self.motion_prob <= 1 or not 0 <= self.repeat_label_prob <= 1:
            raise InvalidParams("probabilities must lie in [0, 1]")
        if len(set(self.labels)) < 2:
            raise InvalidParams("need at least 2 distinct labels")
        n_max = self.event_count_range[1]
        need = n_max * self.event_length_range[0] + (n_max + 1) * self.min_gap_s
        if need > self.duration_range[0]:
            raise InvalidParams(
                f"{n_max} events of >= {self.event_length_range[0]} s do not fit "
                f"in {self.duration_range[0]} s"
            )

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise InvalidParams(f"unknown generator keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


def _pick_labels(rng: np.random.Generator, n: int, cfg: GeneratorConfig) -> list[str]:
    labels: list[str] = []
    for i in range(n):
        prev = labels[-1] if labels else None
        earlier = [l for l in labels[:-1] if l != prev]
        if earlier and rng.random() < cfg.repeat_label_prob:
            labels.append(earlier[int(rng.integers(len(earlier)))])
            continue
        pool = [l for l in cfg.labels if l not in labels]
        if not pool:
            pool = [l for l in cfg.labels if l != prev]
        labels.append(pool[int(rng.integers(len(pool)))])
    return labels


def generate_video(seed: int, params: GeneratorConfig | None = None) -> SyntheticVideo:
    cfg = params or GeneratorConfig()
    cfg.validate()
    rng = np.random.default_rng(seed)
    duration = int(rng.integers(cfg.duration_range[0], cfg.duration_range[1] + 1))
    n = int(rng.integers(cfg.event_count_range[0], cfg.event_count_range[1] + 1))
    lengths = rng.integers(cfg.event_length_range[0], cfg.event_length_range[1] + 1, size=n)
    slack = duration - int(lengths.sum()) - (n + 1) * cfg.min_gap_s
    # shrink the longest events until the timeline fits
    while slack < 0:
        i = int(np.argmax(lengths))
        lengths[i] -= 1
        slack += 1
    shares = rng.dirichlet(np.ones(n + 1)) if n else np.ones(1)
    extra = np.floor(shares * slack).astype(int)
    labels = _pick_labels(rng, n, cfg)

    events = []
    t = cfg.min_gap_s + int(extra[0])
    for i in range(n):
        start, end = t, t + int(lengths[i])
        is_motion = rng.random() < cfg.motion_prob
        min_resize = float(cfg.resize_choices[int(rng.integers(len(cfg.resize_choices)))])
        if is_motion:
            density = float(cfg.density_choices[int(rng.integers(len(cfg.density_choices)))])
        else:
            density = 0.0
        events.append(
            Event(
                id=i,
                window=(float(start), float(end)),
                label=labels[i],
                min_resize=min_resize,
                min_density_fps=density,
                kind=MOTION if is_motion else STATIC,
            )
        )
        t = end + cfg.min_gap_s + int(extra[i + 1])
    return SyntheticVideo(
        duration_s=float(duration),
        native_resolution=tuple(cfg.native_resolution),
        events=tuple(events),
        seed=seed,
    )


# ---------------------------------------------------------------- queries

def question_text(template: str, *, label: str | None = None, window=None) -> str:
    if template == "windowed":
        a, b = window
        return f"What happens between {_fmt_s(a)} s and {_fmt_s(b)} s?"
    if template == "counting":
        return f'How many times does "{label}" happen in the video?'
    if template == "ordering":
        return f'What happens right after "{label}"?'
    if template == "identification":
        return "What is the first thing that happens in the video?"
    raise InvalidParams(f"unknown template {template!r}")


def _fmt_s(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else f"{x:g}"


def valid_templates(video: SyntheticVideo) -> list[str]:
    if len(video.events) == 1:
        return ["windowed"]
    out = ["identification", "counting", "windowed"]
    if _ordering_candidates(video):
        out.insert(2, "ordering")
    return out


def _ordering_candidates(video: SyntheticVideo) -> list[int]:
    labels = video.labels
    return [
        i
        for i in range(len(labels) - 1)
        if labels.count(labels[i]) == 1 and labels[i + 1] != labels[i]
    ]


def _letters(n: int) -> list[str]:
    return [chr(ord("A") + i) for i in range(n)]


def generate_query(
    video: SyntheticVideo,
    seed: int,
    kind: str = OPEN_ENDED,
    template: str | None = None,
    n_choices: int = 4,
    labels: Sequence[str] = LABELS,
) -> QueryInstance:
    """Build a templated query whose answer follows from the timeline alone."""
    if not video.events:
        raise NoEvents("cannot ask about a video without events")
    if kind not in (OPEN_ENDED, MULTIPLE_CHOICE):
        raise InvalidParams(f"unknown query kind {kind!r}")
    rng = np.random.default_rng([seed, 0x5EED])
    allowed = valid_templates(video)
    if template is None:
        template = allowed[int(rng.integers(len(allowed)))]
    elif template not in allowed:
        raise InvalidParams(f"template {template!r} not applicable to this video")

    events = video.events
    if template == "windowed":
        ev = events[int(rng.integers(len(events)))]
        q = question_text("windowed", window=ev.window)
        answer, windows = ev.label, (ev.window,)
    elif template == "counting":
        repeated = [l for l in dict.fromkeys(video.labels) if video.labels.count(l) > 1]
        pool = repeated if repeated and rng.random() < 0.6 else list(dict.fromkeys(video.labels))
        label = pool[int(rng.integers(len(pool)))]
        hits = [ev for ev in events if ev.label == label]
        q = question_text("counting", label=label)
        answer, windows = str(len(hits)), tuple(ev.window for ev in hits)
    elif template == "ordering":
        cands = _ordering_candidates(video)
        i = cands[int(rng.integers(len(cands)))]
        q = question_text("ordering", label=events[i].label)
        answer, windows = events[i + 1].label, (events[i].window, events[i + 1].window)
    else:
        q = question_text("identification")
        answer, windows = events[0].label, (events[0].window,)

    if kind == OPEN_ENDED:
        return QueryInstance(q, answer, OPEN_ENDED, None, windows)

    if template == "counting":
        top = max(n_choices, int(answer) + 1)
        others = [str(k) for k in range(1, top + 1) if str(k) != answer]
    else:
        in_video = [l for l in dict.fromkeys(video.labels) if l != answer]
        unused = [l for l in labels if l not in video.labels and l != answer]
        others = list(rng.permutation(in_video)) + list(rng.permutation(unused))
    options = [answer] + [str(o) for o in others[: n_choices - 1]]
    order = rng.permutation(len(options))
    letters = _letters(len(options))
    choices = tuple((letters[j], options[k]) for j, k in enumerate(order))
    gt_letter = next(letter for letter, text in choices if text == answer)
    return QueryInstance(q, gt_letter, MULTIPLE_CHOICE, choices, windows)


# ---------------------------------------------------------------- observation

def observe(
    video: SyntheticVideo, timestamps: Iterable[float], resize: float
) -> list[FrameObservation]:
    ts = np.asarray(list(timestamps), dtype=float)
    if ts.size and (ts.min() < 0 or ts.max() > video.duration_s):
        raise OutOfRange("timestamps must lie within the video")
    if not 0 < resize <= 1:
        raise InvalidParams("resize must lie in (0, 1]")
    seen: list[list[str]] = [[] for _ in range(ts.size)]
    for ev in video.events:
        if resize < ev.min_resize:
            continue
        inside = np.flatnonzero((ts >= ev.start) & (ts <= ev.end))
        if inside.size == 0:
            continue
        if ev.kind == MOTION and inside.size < ev.min_density_fps * ev.length - 1e-9:
            continue
        for i in inside:
            seen[i].append(ev.label)
    return [
        FrameObservation(timestamp=float(t), resize=float(resize), labels=tuple(labels))
        for t, labels in zip(ts, seen)
    ]


def exhaustive_observation(video: SyntheticVideo) -> list[list[FrameObservation]]:
    """1 fps everywhere at full resolution, plus a dense pass per motion event."""
    n = max(1, math.ceil(video.duration_s))
    step = video.duration_s / n
    batches = [observe(video, [(i + 0.5) * step for i in range(n)], 1.0)]
    for ev in video.events:
        if ev.kind != MOTION:
            continue
        k = max(1, math.ceil(ev.min_density_fps * ev.length))
        w = ev.length / k
        batches.append(observe(video, [ev.start + (i + 0.5) * w for i in range(k)], 1.0))
    return batches


def oracle_answer(video: SyntheticVideo, query: QueryInstance) -> str:
    from .evidence import answer_from_batches

    return answer_from_batches(query.render(), exhaustive_observation(video))


def timeline_count(video: SyntheticVideo, label: str) -> int:
    return sum(ev.label == label for ev in video.events)
