import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import sample_states
from vidagent.frametool import validate
from vidagent.policy import (
    N_FEATURES,
    ActionNotInSpace,
    DirectDense,
    DiscreteActionSpace,
    GlobalThenZoom,
    ToyPolicy,
    ToyPolicyParams,
    encode_action,
    featurize,
    logprob_and_grad,
    logprob_from_features,
)
from vidagent.policy.toy import distribution, n_slots_of
from vidagent.reflector import LENIENT, audit
from vidagent.runtime import initial_state, parse_action, run_episode, step
from vidagent.video import MULTIPLE_CHOICE, generate_query, generate_video

SPACE = DiscreteActionSpace()


def fd_check(params, phi, action, n_slots, h=1e-4):
    _, grad = logprob_from_features(params, phi, action, n_slots)
    fd = np.zeros_like(grad)
    for idx in np.ndindex(grad.shape):
        up, down = params.copy(), params.copy()
        up.theta[idx] += h
        down.theta[idx] -= h
        fd[idx] = (
            logprob_from_features(up, phi, action, n_slots)[0]
            - logprob_from_features(down, phi, action, n_slots)[0]
        ) / (2 * h)
    return np.linalg.norm(fd - grad) / max(np.linalg.norm(grad), 1e-12)


def test_space_size():
    assert SPACE.n_tool == 13 * 4 * 4
    assert SPACE.n_actions == 212


def test_uniform_logprob():
    v = generate_video(3)
    q = generate_query(v, 3, MULTIPLE_CHOICE)
    lp, _ = logprob_and_grad(ToyPolicyParams.zeros(), initial_state(v, q), 0)
    assert lp == pytest.approx(-math.log(212))


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    states = sample_states(12)
    for i, s in enumerate(states):
        params = ToyPolicyParams(rng.normal(0, 0.5, (N_FEATURES, SPACE.n_actions)))
        view = featurize(s)
        n_slots = n_slots_of(view, SPACE)
        allowed = np.flatnonzero(SPACE.mask(n_slots))
        action = int(rng.choice(allowed))
        assert fd_check(params, view.features, action, n_slots) < 1e-5


@given(st.integers(0, 40), st.floats(-5, 5))
def test_logit_shift_invariance(i, c):
    s = sample_states(41)[i]
    view = featurize(s)
    rng = np.random.default_rng(i)
    params = ToyPolicyParams(rng.normal(0, 1, (N_FEATURES, SPACE.n_actions)))
    shifted = params.copy()
    # adding c to every action's bias weight shifts all logits equally
    shifted.theta[0] += c
    n = n_slots_of(view, SPACE)
    np.testing.assert_allclose(
        distribution(params, view.features, n), distribution(shifted, view.features, n), atol=1e-12
    )


@given(st.integers(0, 40), st.integers(0, 10_000))
def test_distribution_is_proper(i, seed):
    s = sample_states(41)[i]
    view = featurize(s)
    rng = np.random.default_rng(seed)
    params = ToyPolicyParams(rng.normal(0, 3, (N_FEATURES, SPACE.n_actions)))
    n = n_slots_of(view, SPACE)
    p = distribution(params, view.features, n)
    assert p.sum() == pytest.approx(1.0)
    assert np.all(p[~SPACE.mask(n)] == 0)
    assert np.all(p >= 0)


def test_masked_action_rejected():
    phi = featurize(sample_states(1)[0]).features
    params = ToyPolicyParams.zeros()
    with pytest.raises(ActionNotInSpace):
        logprob_from_features(params, phi, SPACE.n_actions, 4)
    with pytest.raises(ActionNotInSpace):
        logprob_from_features(params, phi, SPACE.n_tool + 2, 1)


def test_params_validated():
    with pytest.raises(ValueError):
        ToyPolicyParams(np.zeros((2, 2)))
    bad = np.zeros((N_FEATURES, SPACE.n_actions))
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        ToyPolicyParams(bad)


@given(st.sampled_from(range(212 - 4)), st.floats(10, 3000))
def test_composed_calls_are_valid(index, duration):
    assert validate(SPACE.compose(index, duration), duration) == []


def test_snap_recovers_grid_actions():
    for index in range(SPACE.n_tool):
        assert SPACE.snap(SPACE.compose(index, 397.0), 397.0) == index


def test_sampling_is_reproducible():
    rng = np.random.default_rng(1)
    policy = ToyPolicy(ToyPolicyParams(rng.normal(0, 1, (N_FEATURES, SPACE.n_actions))))
    s = sample_states(1)[0]
    assert policy.act(s, 9) == policy.act(s, 9)
    picks = {policy.act(s, seed).step["action"] for seed in range(30)}
    assert len(picks) > 1


def test_output_trace_matches_text():
    rng = np.random.default_rng(2)
    policy = ToyPolicy(ToyPolicyParams(rng.normal(0, 1, (N_FEATURES, SPACE.n_actions))))
    for s in sample_states(20):
        out = policy.act(s, 0)
        assert out.action_trace == parse_action(out.round_text)
        view = featurize(s)
        assert encode_action(SPACE, view, out.action_trace, s.duration_s) == out.step["action"]
        lp, _ = logprob_from_features(policy.params, view.features, out.step["action"], out.step["n_slots"])
        assert lp == pytest.approx(out.logprob)


def test_greedy_takes_argmax():
    theta = np.zeros((N_FEATURES, SPACE.n_actions))
    theta[0, 7] = 5.0
    s = sample_states(1)[0]
    out = ToyPolicy(ToyPolicyParams(theta), greedy=True).act(s, 123)
    assert out.step["action"] == 7


@settings(max_examples=30)
@given(st.integers(0, 5_000))
def test_scripted_calls_never_exceed_one_fps(seed):
    v = generate_video(seed)
    q = generate_query(v, seed)
    for teacher in (DirectDense(), GlobalThenZoom()):
        state, prev = initial_state(v, q), None
        for _ in range(3):
            state, rnd = step(state, teacher, v)
            if rnd.executed_call is None:
                break
            call = rnd.executed_call
            assert "R4" not in audit(prev, call, v.duration_s, LENIENT).triggered_rules
            prev = state.prev


def test_global_then_zoom_pattern():
    v = generate_video(8)
    q = generate_query(v, 8, MULTIPLE_CHOICE)
    traj = run_episode(v, q, GlobalThenZoom())
    first, second = (b.call for b in traj.frame_batches)
    assert (first.start_time, first.end_time) == (0, v.duration_s)
    assert second.resize > first.resize


def test_save_load(tmp_path):
    rng = np.random.default_rng(3)
    params = ToyPolicyParams(rng.normal(0, 1, (N_FEATURES, SPACE.n_actions)))
    path = tmp_path / "theta.json"
    params.save(path, meta={"stage": "sft"})
    back = ToyPolicyParams.load(path)
    np.testing.assert_array_equal(back.theta, params.theta)
    assert back.space == params.space
