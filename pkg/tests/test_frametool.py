import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from vidagent.frametool import (
    PROFILES,
    QWEN,
    FrameBatch,
    FrameSelectCall,
    InvalidCall,
    TokenProfile,
    execute,
    sample_timestamps,
    token_cost,
    tokens_per_frame,
    validate,
    visual_budget,
)
from vidagent.runtime import parse_action
from vidagent.video import SyntheticVideo

RESIZES = st.sampled_from([0.05, 0.1, 0.2, 0.25, 0.4, 0.5, 0.75, 1.0])


def blank(duration):
    return SyntheticVideo(duration, (1280, 720), (), seed=0)


def codes(call, duration):
    return [v.code for v in validate(call, duration)]


def test_validate_examples():
    assert validate(FrameSelectCall(0, 397, 10, 0.1), 397) == []
    assert codes(FrameSelectCall(50, 50, 4, 0.5), 397) == ["EmptyWindow"]
    assert codes(FrameSelectCall(0, 500, 4, 0.5), 397) == ["OutOfRange"]


def test_validate_reports_every_violation():
    got = validate(FrameSelectCall(-1, 500, 0, 1.5), 397)
    assert {(v.code, v.field) for v in got} == {
        ("OutOfRange", "start_time"),
        ("OutOfRange", "end_time"),
        ("BadFrameCount", "nframes"),
        ("BadResize", "resize"),
    }


def test_execute_rejects_invalid():
    with pytest.raises(InvalidCall) as err:
        execute(FrameSelectCall(50, 50, 4, 0.5), blank(397))
    assert err.value.violations[0].code == "EmptyWindow"


def test_fps_examples():
    assert execute(FrameSelectCall(200, 250, 100, 0.4), blank(397)).fps == 2.0
    assert execute(FrameSelectCall(0, 397, 10, 0.1), blank(397)).fps == pytest.approx(0.0252, abs=1e-4)


def test_midpoint_timestamps():
    batch = execute(FrameSelectCall(0, 1218, 60, 0.5), blank(1218))
    assert len(batch.timestamps) == 60
    assert batch.timestamps[0] == pytest.approx(10.15)
    assert batch.timestamps[-1] == pytest.approx(1218 - 10.15)


@pytest.mark.parametrize(
    "n, resize, expected",
    [(16, 1.0, 10_400), (32, 1.0, 20_800), (1, 1.0, 650), (10, 0.1, 70)],
)
def test_token_cost_qwen(n, resize, expected):
    assert token_cost(FrameSelectCall(0, 100, n, resize), QWEN) == expected


def test_token_cost_other_profiles():
    call = FrameSelectCall(0, 100, 4, 0.5)
    assert token_cost(call, PROFILES["gemini"]) == 4 * math.ceil(258 / 4)
    assert token_cost(call, PROFILES["longva"]) == 4 * 36


def test_profile_must_be_positive():
    with pytest.raises(ValueError):
        TokenProfile("bad", 0)


@pytest.mark.parametrize("n, resize, expected", [(30, 0.5, 15.0), (10, 0.1, 1.0), (1, 1.0, 1.0)])
def test_visual_budget(n, resize, expected):
    assert visual_budget(FrameSelectCall(0, 100, n, resize)) == pytest.approx(expected)


@given(st.integers(1, 500), RESIZES)
def test_tokens_per_frame_matches_rational_formula(n, resize):
    exact = math.ceil(650 * Fraction(str(resize)) ** 2)
    assert tokens_per_frame(resize) == exact
    assert token_cost(FrameSelectCall(0, 1000, n, resize)) == n * exact


@given(
    st.floats(0, 500),
    st.floats(0.5, 500),
    st.integers(1, 300),
)
def test_fps_times_window_is_nframes(start, width, n):
    call = FrameSelectCall(start, start + width, n, 0.5)
    assert call.fps * (call.end_time - call.start_time) == pytest.approx(n, rel=1e-9)


@given(st.integers(1, 200), st.integers(0, 50), RESIZES, RESIZES)
def test_token_cost_monotone(n, extra, r1, r2):
    lo, hi = sorted((r1, r2))
    assert token_cost(FrameSelectCall(0, 10, n, lo)) <= token_cost(FrameSelectCall(0, 10, n + extra, lo))
    assert token_cost(FrameSelectCall(0, 10, n, lo)) <= token_cost(FrameSelectCall(0, 10, n, hi))


@given(st.floats(0, 100), st.floats(0.1, 100), st.floats(-50, 50), st.integers(1, 64))
def test_translation_invariance(start, width, delta, n):
    start = max(start, -delta)
    a = sample_timestamps(FrameSelectCall(start, start + width, n, 0.5))
    b = sample_timestamps(FrameSelectCall(start + delta, start + width + delta, n, 0.5))
    assert b == pytest.approx([t + delta for t in a], abs=1e-9)


@given(st.floats(0, 100), st.floats(0.1, 100), st.integers(1, 64))
def test_timestamps_inside_window(start, width, n):
    ts = sample_timestamps(FrameSelectCall(start, start + width, n, 0.5))
    assert len(ts) == n
    assert all(start < t < start + width for t in ts)
    assert ts == sorted(ts)


def test_envelope_round_trip():
    call = FrameSelectCall(0, 397, 10, 0.1)
    assert parse_action(call.envelope()).call == call
    assert FrameSelectCall.from_arguments(call.to_arguments()) == call


def test_batch_round_trip():
    batch = execute(FrameSelectCall(5, 45, 8, 0.25), blank(60))
    assert FrameBatch.from_dict(batch.to_dict()) == batch
