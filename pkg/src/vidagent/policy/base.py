from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

from ..frametool import FrameSelectCall
from ..runtime import AgentAction, BeliefState, FinalAnswer, ToolCall


@dataclass(frozen=True)
class PolicyOutput:
    round_text: str
    logprob: float | None = None
    action_trace: AgentAction | None = None
    step: dict | None = None


class Policy(Protocol):
    name: str

    def act(self, state: BeliefState, seed: int) -> PolicyOutput: ...


def _labels_seen(state: BeliefState) -> list[str]:
    return sorted({l for ob in state.F_t for l in ob.labels})


def summary_line(state: BeliefState) -> str:
    if not state.batches:
        return "No frames have been inspected yet; only the question is available."
    seen = _labels_seen(state)
    return (
        f"After {len(state.batches)} tool round(s) and {state.tokens_spent} visual tokens, "
        f"recognized events: {', '.join(seen) if seen else 'none'}."
    )


def render_call(state: BeliefState, call: FrameSelectCall, plan: str, reflection: str) -> str:
    stats = f"(fps {call.fps:.3f}, visual budget {call.nframes * call.resize:g})"
    return (
        f"Summary: {summary_line(state)}\n"
        f"Plan: {plan} {stats}\n"
        f"Action:\n{call.envelope()}\n"
        f"Reflection: {reflection}"
    )


def render_answer(state: BeliefState, answer: str, reflection: str) -> str:
    return f"Summary: {summary_line(state)}\nReflection: {reflection}\nAnswer: {answer}"


def call_output(state, call, plan, reflection="More visual evidence is needed.", **kw) -> PolicyOutput:
    return PolicyOutput(render_call(state, call, plan, reflection), action_trace=ToolCall(call), **kw)


def answer_output(state, answer, reflection="The evidence is sufficient to answer.", **kw) -> PolicyOutput:
    return PolicyOutput(render_answer(state, answer, reflection), action_trace=FinalAnswer(answer), **kw)
