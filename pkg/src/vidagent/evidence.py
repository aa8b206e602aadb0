"""Turns symbolic frame observations into answers for templated questions.

This is the perception stand-in shared by the agent policies, the CSV judge
and the exhaustive oracle. It only sees the rendered question text and the
observations gathered so far, never the event timeline.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

_WINDOWED = re.compile(r"What happens between ([\d.]+) s and ([\d.]+) s\?")
_COUNTING = re.compile(r'How many times does "([^"]+)" happen in the video\?')
_ORDERING = re.compile(r'What happens right after "([^"]+)"\?')
_IDENT = re.compile(r"What is the first thing that happens in the video\?")
_CHOICE = re.compile(r"^([A-Z]): (.+)$", re.MULTILINE)

UNKNOWN = "unknown"


@dataclass(frozen=True)
class Task:
    template: str
    label: str | None = None
    window: tuple[float, float] | None = None


@dataclass(frozen=True)
class Reading:
    candidates: tuple[str, ...]
    found_info: bool
    detected: frozenset[str]
    focus: tuple[float, float] | None


class UnknownQuestion(ValueError):
    pass


def parse_question(text: str) -> Task:
    if m := _WINDOWED.search(text):
        return Task("windowed", window=(float(m.group(1)), float(m.group(2))))
    if m := _COUNTING.search(text):
        return Task("counting", label=m.group(1))
    if m := _ORDERING.search(text):
        return Task("ordering", label=m.group(1))
    if _IDENT.search(text):
        return Task("identification")
    raise UnknownQuestion(f"no template matches: {text[:80]!r}")


def parse_choices(text: str) -> list[tuple[str, str]]:
    return _CHOICE.findall(text)


def _normalize(s: str) -> str:
    return " ".join(re.findall(r"[a-z0-9]+", s.lower()))


def _timeline(batches) -> list[tuple[float, set[str]]]:
    """Union of detections per timestamp, in time order."""
    by_t: dict[float, set[str]] = {}
    for batch in batches:
        for ob in batch:
            by_t.setdefault(ob.timestamp, set()).update(ob.labels)
    return sorted(by_t.items())


def _runs(batch, label: str) -> list[tuple[float, float]]:
    runs: list[tuple[float, float]] = []
    current = None
    for ob in sorted(batch, key=lambda o: o.timestamp):
        if label in ob.labels:
            current = (current[0], ob.timestamp) if current else (ob.timestamp, ob.timestamp)
        elif current:
            runs.append(current)
            current = None
    if current:
        runs.append(current)
    return runs


def read(text: str, batches: Sequence[Sequence]) -> Reading:
    """Read the evidence in ``batches`` (one list of observations per tool call)."""
    task = parse_question(text)
    timeline = _timeline(batches)
    detected = frozenset(l for _, labels in timeline for l in labels)
    hits = [(t, labels) for t, labels in timeline if labels]

    if task.template == "windowed":
        a, b = task.window
        counts = Counter(l for t, labels in hits if a <= t <= b for l in labels)
        cands = tuple(sorted(counts, key=lambda l: (-counts[l], l)))
        return Reading(cands, bool(cands), detected, task.window)

    if task.template == "counting":
        best = max((len(_runs(batch, task.label)) for batch in batches), default=0)
        times = [t for t, labels in hits if task.label in labels]
        focus = (times[0], times[-1]) if times else None
        cands = (str(best),) if best else ()
        return Reading(cands, bool(best), detected, focus)

    if task.template == "ordering":
        first = next((i for i, (_, labels) in enumerate(hits) if task.label in labels), None)
        if first is None:
            return Reading((), False, detected, None)
        nxt = None
        for t, labels in hits[first:]:
            others = sorted(labels - {task.label})
            if others:
                nxt = (t, others[0])
                break
        focus = (hits[first][0], nxt[0] if nxt else hits[-1][0])
        cands = (nxt[1],) if nxt else ()
        return Reading(cands, nxt is not None, detected, focus)

    # identification: labels in order of first appearance
    order: list[str] = []
    for _, labels in hits:
        for l in sorted(labels):
            if l not in order:
                order.append(l)
    focus = (0.0, hits[0][0]) if hits else None
    return Reading(tuple(order), bool(order), detected, focus)


def ranked_answers(text: str, batches: Sequence[Sequence]) -> list[str]:
    """Candidate answers in the answer space of the question, best first.

    Multiple-choice questions rank every letter (supported ones first, then
    the rest in letter order); open-ended questions return the supported
    phrases, or ``["unknown"]`` when nothing relevant has been seen.
    """
    reading = read(text, batches)
    choices = parse_choices(text)
    if not choices:
        return list(reading.candidates) or [UNKNOWN]
    by_text = {_normalize(c): letter for letter, c in choices}
    ranked = [by_text[_normalize(c)] for c in reading.candidates if _normalize(c) in by_text]
    ranked = list(dict.fromkeys(ranked))
    return ranked + [letter for letter, _ in choices if letter not in ranked]


def answer_from_batches(text: str, batches: Sequence[Sequence]) -> str:
    """Best single answer, or ``""`` when the evidence supports none."""
    reading = read(text, batches)
    choices = parse_choices(text)
    if not reading.candidates:
        return ""
    if not choices:
        return reading.candidates[0]
    ranked = ranked_answers(text, batches)
    supported = {_normalize(c) for c in reading.candidates}
    top = ranked[0]
    return top if _normalize(dict(choices)[top]) in supported else ""
