import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import Scripted, call_text
from vidagent.frametool import FrameSelectCall
from vidagent.policy import DirectDense, GlobalThenZoom
from vidagent.reflector import LENIENT, STRICT, Reflector
from vidagent.runtime import (
    ANSWERED,
    BUDGET_CAP,
    PARSE_FAILURE,
    ROUND_CAP,
    EpisodeLimits,
    FinalAnswer,
    MalformedJson,
    MissingArgument,
    NoAction,
    ToolCall,
    Trajectory,
    UnknownTool,
    initial_state,
    parse_action,
    run_episode,
    step,
)
from vidagent.video import MULTIPLE_CHOICE, OPEN_ENDED, generate_query, generate_video


def test_parse_tool_call():
    text = 'Let me look.\n{"tool": "frame_select", "arguments": {"start_time": 0, "end_time": 397, "nframes": 10, "resize": 0.1}}'
    assert parse_action(text) == ToolCall(FrameSelectCall(0, 397, 10, 0.1))


def test_parse_answer():
    assert parse_action("...confirming this as the primary trigger.\nAnswer: D") == FinalAnswer("D")


def test_parse_first_envelope_wins():
    text = call_text(0, 10, 2, 0.5) + "\n" + call_text(5, 10, 2, 0.5) + "\nAnswer: A"
    assert parse_action(text).call == FrameSelectCall(0, 10, 2, 0.5)


@pytest.mark.parametrize(
    "text, error",
    [
        ("I am unsure.", NoAction),
        ('{"tool": "frame_select", "arguments": {"start_time": 0,', MalformedJson),
        ('{"tool": "zoom", "arguments": {}}', UnknownTool),
        ('{"tool": "frame_select", "arguments": {"start_time": 0, "end_time": 5}}', MissingArgument),
        ('{"tool": "frame_select", "arguments": {"start_time": 0, "end_time": 5, "nframes": 2.5, "resize": 1}}', MalformedJson),
        ('{"tool": "frame_select", "arguments": {"start_time": "0", "end_time": 5, "nframes": 2, "resize": 1}}', MalformedJson),
    ],
)
def test_parse_errors(text, error):
    with pytest.raises(error):
        parse_action(text)


@pytest.fixture
def item():
    v = generate_video(21)
    return v, generate_query(v, 21, MULTIPLE_CHOICE)


def test_global_then_zoom_first_step(item):
    v, q = item
    state = initial_state(v, q)
    assert len(state.h_t) == 1
    nxt, rnd = step(state, GlobalThenZoom(), v)
    assert isinstance(rnd.action, ToolCall)
    assert rnd.action.call.start_time == 0 and rnd.action.call.end_time == v.duration_s
    assert len(nxt.batches) == 1 and nxt.round_index == 1
    assert nxt.h_t[-1].batch_index == 0


def test_answer_step_leaves_frames_alone(item):
    v, q = item
    state = initial_state(v, q)
    nxt, rnd = step(state, Scripted("Answer: B"), v)
    assert rnd.action == FinalAnswer("B")
    assert nxt.batches == state.batches and nxt.tokens_spent == 0


def test_strict_reflector_caps_fps(item):
    v, q = item
    policy = Scripted(call_text(10, 40, 60, 0.5), "Answer: A")
    traj = run_episode(v, q, policy, reflector=Reflector(STRICT))
    r0 = traj.rounds[0]
    assert r0.action.call.fps == 2
    assert r0.executed_call.fps <= 1
    assert "R4" in r0.reflection_audit.triggered_rules


def test_direct_dense_shape(item):
    v, q = item
    traj = run_episode(v, q, DirectDense())
    assert traj.outcome == ANSWERED
    assert [type(r.action) for r in traj.rounds] == [ToolCall, FinalAnswer]


def test_global_then_zoom_shape(item):
    v, q = item
    traj = run_episode(v, q, GlobalThenZoom(), reflector=Reflector(LENIENT))
    assert [type(r.action) for r in traj.rounds] == [ToolCall, ToolCall, FinalAnswer]
    assert traj.n_tool_calls == 2


def test_round_cap(item):
    v, q = item
    traj = run_episode(v, q, Scripted(call_text(0, 20, 2, 0.1)), EpisodeLimits(max_rounds=1))
    assert traj.outcome == ROUND_CAP
    assert traj.final_answer is None


def test_budget_cap(item):
    v, q = item
    traj = run_episode(v, q, Scripted(call_text(0, 40, 16, 1.0)), EpisodeLimits(6, 25_000))
    assert traj.outcome == BUDGET_CAP
    assert traj.tokens_spent == 20_800
    assert traj.rounds[-1].executed_call is None


def test_invalid_call_continues(item):
    v, q = item
    traj = run_episode(v, q, Scripted(call_text(50, 50, 4, 0.5), "Answer: A"))
    assert traj.rounds[0].error.startswith("InvalidCall")
    assert traj.outcome == ANSWERED and traj.n_tool_calls == 0


def test_parse_failure_ends_episode(item):
    v, q = item
    traj = run_episode(v, q, Scripted("hmm"))
    assert traj.outcome == PARSE_FAILURE
    assert traj.error.startswith("NoAction")


def test_limits_validated():
    with pytest.raises(ValueError):
        EpisodeLimits(0, 10)


@pytest.mark.parametrize("kind", [OPEN_ENDED, MULTIPLE_CHOICE])
def test_json_round_trip_and_replay(kind):
    v = generate_video(5)
    q = generate_query(v, 5, kind)
    a = run_episode(v, q, GlobalThenZoom(), reflector=Reflector(STRICT), seed=3)
    b = run_episode(v, q, GlobalThenZoom(), reflector=Reflector(STRICT), seed=3)
    assert a == b
    back = Trajectory.from_dict(json.loads(a.to_json()))
    assert back == a
    assert back.to_json() == a.to_json()


def test_unknown_schema_rejected(item):
    v, q = item
    d = run_episode(v, q, DirectDense()).to_dict()
    d["schema_version"] = 99
    with pytest.raises(ValueError):
        Trajectory.from_dict(d)


@settings(max_examples=25)
@given(
    st.integers(0, 500),
    st.lists(
        st.tuples(st.floats(0, 0.9), st.floats(0.05, 1), st.integers(1, 40), st.sampled_from([0.1, 0.5, 1.0])),
        min_size=1,
        max_size=6,
    ),
    st.integers(2_000, 30_000),
)
def test_tokens_monotone_and_bounded(seed, calls, max_tokens):
    v = generate_video(seed)
    q = generate_query(v, seed)
    D = v.duration_s
    texts = [call_text(a * D, min(D, a * D + w * D), n, r) for a, w, n, r in calls] + ["Answer: x"]
    traj = run_episode(v, q, Scripted(*texts), EpisodeLimits(8, max_tokens))
    spent = [0]
    for b in traj.frame_batches:
        spent.append(spent[-1] + b.token_cost)
    assert spent == sorted(spent)
    assert spent[-1] == traj.tokens_spent <= max_tokens


def test_each_batch_referenced_once(item):
    v, q = item
    state = initial_state(v, q)
    policy = Scripted(call_text(0, 20, 4, 0.5), call_text(20, 40, 4, 0.5), call_text(40, 60, 4, 0.5))
    for _ in range(3):
        state, _ = step(state, policy, v)
    refs = [h.batch_index for h in state.h_t if h.batch_index is not None]
    assert sorted(refs) == list(range(len(state.batches))) == [0, 1, 2]
