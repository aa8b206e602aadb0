"""Belief-state round loop: parse policy output, audit and execute tool calls."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from numbers import Real
from typing import TYPE_CHECKING, Callable

from .evidence import UnknownQuestion, read
from .frametool import (
    ARGUMENTS,
    QWEN,
    TOOL_NAME,
    FrameBatch,
    FrameSelectCall,
    TokenProfile,
    execute,
    token_cost,
    validate,
)
from .reflector import PreviousRound, Verdict
from .video import FrameObservation, QueryInstance, SyntheticVideo

if TYPE_CHECKING:
    from .policy import Policy

SCHEMA_VERSION = 1
SYSTEM_PROMPT = "Use Frame Select Tool to Analyze the video and generate an answer to the question."
FOLLOW_UP = "If more information is needed, call the frame selection tool again."

ANSWERED = "answered"
ROUND_CAP = "round_cap"
BUDGET_CAP = "budget_cap"
PARSE_FAILURE = "parse_failure"
BUDGET_EXCEEDED = "budget_exceeded"


# ---------------------------------------------------------------- actions

@dataclass(frozen=True)
class ToolCall:
    call: FrameSelectCall

    def to_dict(self) -> dict:
        return {"type": "tool_call", "tool": TOOL_NAME, "arguments": self.call.to_arguments()}


@dataclass(frozen=True)
class FinalAnswer:
    text: str

    def to_dict(self) -> dict:
        return {"type": "final_answer", "text": self.text}


AgentAction = ToolCall | FinalAnswer


def action_from_dict(d: dict) -> AgentAction:
    if d["type"] == "tool_call":
        return ToolCall(FrameSelectCall.from_arguments(d["arguments"]))
    return FinalAnswer(d["text"])


class ParseError(ValueError):
    code = "ParseError"


class MalformedJson(ParseError):
    code = "MalformedJson"


class UnknownTool(ParseError):
    code = "UnknownTool"


class MissingArgument(ParseError):
    code = "MissingArgument"


class NoAction(ParseError):
    code = "NoAction"


_decoder = json.JSONDecoder()
_ANSWER = re.compile(r"Answer:")


def _first_envelope(text: str) -> dict | None:
    i = text.find("{")
    while i != -1:
        try:
            obj, _ = _decoder.raw_decode(text, i)
        except json.JSONDecodeError:
            obj = None
        if isinstance(obj, dict) and "tool" in obj:
            return obj
        i = text.find("{", i + 1)
    return None


def _number(args: dict, key: str) -> float:
    value = args[key]
    if isinstance(value, bool) or not isinstance(value, Real):
        raise MalformedJson(f"argument {key!r} must be a number, got {value!r}")
    return value


def parse_action(model_text: str) -> AgentAction:
    """Extract the single action in a round of model output.

    A complete ``{"tool": ...}`` JSON object wins over an ``Answer:`` marker
    when both are present.
    """
    env = _first_envelope(model_text)
    if env is None:
        if re.search(r'"tool"\s*:', model_text):
            raise MalformedJson("tool envelope present but not valid JSON")
        marks = list(_ANSWER.finditer(model_text))
        if not marks:
            raise NoAction("no tool call and no 'Answer:' marker")
        return FinalAnswer(model_text[marks[-1].end() :].strip())
    if env["tool"] != TOOL_NAME:
        raise UnknownTool(f"unknown tool {env['tool']!r}")
    args = env.get("arguments")
    if not isinstance(args, dict):
        raise MissingArgument("envelope has no 'arguments' object")
    missing = [k for k in ARGUMENTS if k not in args]
    if missing:
        raise MissingArgument(f"missing arguments: {', '.join(missing)}")
    nframes = _number(args, "nframes")
    if float(nframes) != int(nframes):
        raise MalformedJson("nframes must be an integer")
    return ToolCall(
        FrameSelectCall(
            start_time=_number(args, "start_time"),
            end_time=_number(args, "end_time"),
            nframes=int(nframes),
            resize=_number(args, "resize"),
        )
    )


# ---------------------------------------------------------------- state

@dataclass(frozen=True)
class HistoryItem:
    role: str
    content: str
    batch_index: int | None = None


@dataclass(frozen=True)
class EpisodeLimits:
    max_rounds: int = 6
    max_tokens: int = 25_000

    def __post_init__(self):
        if self.max_rounds < 1 or self.max_tokens < 1:
            raise ValueError("episode limits must both be >= 1")

    def to_dict(self) -> dict:
        return {"max_rounds": self.max_rounds, "max_tokens": self.max_tokens}


@dataclass(frozen=True)
class BeliefState:
    q: str
    h_t: tuple[HistoryItem, ...]
    batches: tuple[tuple[FrameObservation, ...], ...] = ()
    round_index: int = 0
    tokens_spent: int = 0
    video_id: str = ""
    duration_s: float = 0.0
    max_tokens: int = EpisodeLimits().max_tokens
    prev: PreviousRound | None = None
    covered: tuple[tuple[float, float], ...] = ()
    last_batch: FrameBatch | None = None

    @property
    def F_t(self) -> list[FrameObservation]:
        return [ob for batch in self.batches for ob in batch]

    @property
    def question(self) -> str:
        return self.q


def user_header(video: SyntheticVideo, query: QueryInstance) -> str:
    height = video.native_resolution[1]
    return (
        f"Video Length: {video.duration_s:g} seconds. Original video resolution: {height}p.\n"
        + query.render()
    )


def initial_state(
    video: SyntheticVideo, query: QueryInstance, limits: EpisodeLimits | None = None
) -> BeliefState:
    q = user_header(video, query)
    return BeliefState(
        q=q,
        h_t=(HistoryItem("user", q),),
        video_id=video.video_id,
        duration_s=video.duration_s,
        max_tokens=(limits or EpisodeLimits()).max_tokens,
    )


def found_info(q: str, observations) -> bool:
    try:
        return read(q, [observations]).found_info
    except UnknownQuestion:
        return any(ob.labels for ob in observations)


def tool_response(round_no: int, batch: FrameBatch, question: str) -> str:
    lines = [f"Tool Response: Round {round_no}"]
    for ob in batch.observations:
        seen = ", ".join(ob.labels) if ob.labels else "nothing recognizable"
        lines.append(f"[{ob.timestamp:.2f}s @ resize {ob.resize:g}] {seen}")
    lines += [FOLLOW_UP, f"Question: {question}"]
    return "\n".join(lines)


# ---------------------------------------------------------------- rounds

_SECTION = re.compile(r"^(Summary|Plan|Reflection):\s*(.*)$", re.MULTILINE)


def split_sections(text: str) -> dict[str, str]:
    return {k.lower(): v.strip() for k, v in _SECTION.findall(text)}


@dataclass(frozen=True)
class Round:
    summary: str
    plan: str
    action: AgentAction
    reflection: str | None = None
    round_text: str = ""
    reflection_audit: Verdict | None = None
    error: str | None = None
    step: dict | None = None

    @property
    def executed_call(self) -> FrameSelectCall | None:
        if not isinstance(self.action, ToolCall) or self.error:
            return None
        if self.reflection_audit and self.reflection_audit.corrected_call:
            return self.reflection_audit.corrected_call
        return self.action.call

    def to_dict(self) -> dict:
        return {
            "summary": self.summary,
            "plan": self.plan,
            "action": self.action.to_dict(),
            "reflection": self.reflection,
            "round_text": self.round_text,
            "reflection_audit": self.reflection_audit.to_dict() if self.reflection_audit else None,
            "error": self.error,
            "step": self.step,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Round":
        audit = d.get("reflection_audit")
        return cls(
            summary=d["summary"],
            plan=d["plan"],
            action=action_from_dict(d["action"]),
            reflection=d.get("reflection"),
            round_text=d.get("round_text", ""),
            reflection_audit=Verdict.from_dict(audit) if audit else None,
            error=d.get("error"),
            step=d.get("step"),
        )


def step(
    state: BeliefState,
    policy: "Policy",
    video: SyntheticVideo,
    reflector: Callable | None = None,
    *,
    seed: int = 0,
    profile: TokenProfile = QWEN,
) -> tuple[BeliefState, Round]:
    """Advance one round. Raises :class:`ParseError` on unparseable output."""
    out = policy.act(state, seed)
    action = parse_action(out.round_text)
    sections = split_sections(out.round_text)
    rnd = Round(
        summary=sections.get("summary", out.round_text),
        plan=sections.get("plan", ""),
        action=action,
        reflection=sections.get("reflection"),
        round_text=out.round_text,
        step=out.step,
    )
    h_t = state.h_t + (HistoryItem("assistant", out.round_text),)
    nxt = replace(state, h_t=h_t, round_index=state.round_index + 1)

    if isinstance(action, FinalAnswer):
        return nxt, rnd

    proposed = action.call
    violations = validate(proposed, video.duration_s)
    if violations:
        msg = "; ".join(f"{v.code}({v.field}): {v.message}" for v in violations)
        err = HistoryItem("user", f"Tool Error: {msg}\n{FOLLOW_UP}")
        return replace(nxt, h_t=h_t + (err,)), replace(rnd, error=f"InvalidCall: {msg}")

    verdict = None
    executed = proposed
    if reflector is not None:
        verdict = reflector(state.prev, proposed, video.duration_s)
        if verdict.corrected_call is not None:
            executed = verdict.corrected_call
    rnd = replace(rnd, reflection_audit=verdict)

    if state.tokens_spent + token_cost(executed, profile) > state.max_tokens:
        return nxt, replace(rnd, error=BUDGET_EXCEEDED)

    batch = execute(executed, video, profile)
    idx = len(state.batches)
    response = HistoryItem("user", tool_response(idx + 1, batch, state.q), batch_index=idx)
    nxt = replace(
        nxt,
        h_t=h_t + (response,),
        batches=state.batches + (batch.observations,),
        tokens_spent=state.tokens_spent + batch.token_cost,
        prev=PreviousRound(executed, found_info(state.q, batch.observations)),
        covered=state.covered + ((executed.start_time, executed.end_time),),
        last_batch=batch,
    )
    return nxt, rnd


# ---------------------------------------------------------------- episodes

@dataclass(frozen=True)
class Trajectory:
    video_id: str
    query: QueryInstance
    rounds: tuple[Round, ...]
    frame_batches: tuple[FrameBatch, ...]
    final_answer: str | None
    limits: EpisodeLimits
    outcome: str
    duration_s: float = 0.0
    seed: int = 0
    policy: str = ""
    tokens_spent: int = 0
    error: str | None = None
    reward: dict | None = None
    meta: dict = field(default_factory=dict)

    @property
    def tool_rounds(self) -> list[Round]:
        return [r for r in self.rounds if r.executed_call is not None]

    @property
    def n_tool_calls(self) -> int:
        return len(self.frame_batches)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "video_id": self.video_id,
            "query": self.query.to_dict(),
            "rounds": [r.to_dict() for r in self.rounds],
            "frame_batches": [b.to_dict() for b in self.frame_batches],
            "final_answer": self.final_answer,
            "limits": self.limits.to_dict(),
            "outcome": self.outcome,
            "duration_s": self.duration_s,
            "seed": self.seed,
            "policy": self.policy,
            "tokens_spent": self.tokens_spent,
            "error": self.error,
            "reward": self.reward,
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "Trajectory":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported trajectory schema {d.get('schema_version')!r}")
        return cls(
            video_id=d["video_id"],
            query=QueryInstance.from_dict(d["query"]),
            rounds=tuple(Round.from_dict(r) for r in d["rounds"]),
            frame_batches=tuple(FrameBatch.from_dict(b) for b in d["frame_batches"]),
            final_answer=d["final_answer"],
            limits=EpisodeLimits(**d["limits"]),
            outcome=d["outcome"],
            duration_s=d.get("duration_s", 0.0),
            seed=d.get("seed", 0),
            policy=d.get("policy", ""),
            tokens_spent=d.get("tokens_spent", 0),
            error=d.get("error"),
            reward=d.get("reward"),
            meta=d.get("meta") or {},
        )


def round_seed(seed: int, round_index: int) -> int:
    return (seed * 1_000_003 + round_index) % (2**63)


def run_episode(
    video: SyntheticVideo,
    query: QueryInstance,
    policy: "Policy",
    limits: EpisodeLimits | None = None,
    reflector: Callable | None = None,
    *,
    seed: int = 0,
    profile: TokenProfile = QWEN,
) -> Trajectory:
    limits = limits or EpisodeLimits()
    state = initial_state(video, query, limits)
    rounds: list[Round] = []
    batches: list[FrameBatch] = []
    outcome, answer, error = ROUND_CAP, None, None

    for r in range(limits.max_rounds):
        try:
            state, rnd = step(state, policy, video, reflector, seed=round_seed(seed, r), profile=profile)
        except ParseError as exc:
            outcome, error = PARSE_FAILURE, f"{exc.code}: {exc}"
            break
        rounds.append(rnd)
        if isinstance(rnd.action, FinalAnswer):
            outcome, answer = ANSWERED, rnd.action.text
            break
        if rnd.error == BUDGET_EXCEEDED:
            outcome = BUDGET_CAP
            break
        if rnd.executed_call is not None:
            batches.append(state.last_batch)

    return Trajectory(
        video_id=video.video_id,
        query=query,
        rounds=tuple(rounds),
        frame_batches=tuple(batches),
        final_answer=answer,
        limits=limits,
        outcome=outcome,
        duration_s=video.duration_s,
        seed=seed,
        policy=getattr(policy, "name", type(policy).__name__),
        tokens_spent=state.tokens_spent,
        error=error,
    )


def transcript(trajectory: Trajectory, native_height: int | None = None) -> list[dict]:
    """Chat-style messages mirroring the system / user / assistant / tool-response layout."""
    height = f"{native_height}p" if native_height else "unknown"
    header = (
        f"Video Length: {trajectory.duration_s:g} seconds. "
        f"Original video resolution: {height}.\n{trajectory.query.render()}"
    )
    msgs = [{"role": "system", "content": SYSTEM_PROMPT}, {"role": "user", "content": header}]
    n = 0
    for rnd in trajectory.rounds:
        msgs.append({"role": "assistant", "content": rnd.round_text})
        if rnd.error and rnd.error.startswith("InvalidCall"):
            msgs.append({"role": "user", "content": f"Tool Error: {rnd.error}\n{FOLLOW_UP}"})
        elif rnd.executed_call is not None:
            msgs.append(
                {"role": "user", "content": tool_response(n + 1, trajectory.frame_batches[n], header)}
            )
            n += 1
    return msgs
