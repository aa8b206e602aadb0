import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from vidagent.evidence import parse_choices
from vidagent.video import (
    LABELS,
    MOTION,
    MULTIPLE_CHOICE,
    OPEN_ENDED,
    Event,
    GeneratorConfig,
    InvalidParams,
    NoEvents,
    OutOfRange,
    QueryInstance,
    SyntheticVideo,
    generate_query,
    generate_video,
    observe,
    oracle_answer,
    timeline_count,
)


def video_with(*events, duration=120.0):
    return SyntheticVideo(duration, (1280, 720), tuple(events), seed=0)


def test_generation_is_deterministic():
    a, b = generate_video(7), generate_video(7)
    assert a == b
    assert a.to_json() == b.to_json()
    assert generate_query(a, 7, OPEN_ENDED) == generate_query(b, 7, OPEN_ENDED)


def test_fixed_duration_and_event_count():
    cfg = GeneratorConfig(duration_range=(397, 397), event_count_range=(3, 3))
    v = generate_video(7, cfg)
    assert v.duration_s == 397
    assert len(v.events) == 3


@pytest.mark.parametrize(
    "kwargs",
    [
        {"duration_range": (100, 50)},
        {"event_count_range": (4, 2)},
        {"event_length_range": (20, 8)},
        {"resize_choices": ()},
        {"resize_choices": (0.0,)},
        {"density_choices": (2.0,), "motion_prob": 0.5},
        {"duration_range": (20, 30), "event_count_range": (4, 4)},
    ],
)
def test_invalid_params(kwargs):
    with pytest.raises(InvalidParams):
        generate_video(1, GeneratorConfig(**kwargs))


def test_generator_config_rejects_unknown_keys():
    with pytest.raises(InvalidParams):
        GeneratorConfig.from_dict({"durations": [1, 2]})


@given(st.integers(0, 10_000))
def test_generated_events_respect_invariants(seed):
    v = generate_video(seed)
    prev_end = 0.0
    for ev in v.events:
        assert 0 <= ev.start < ev.end <= v.duration_s
        assert ev.start >= prev_end
        assert 0 < ev.min_resize <= 1
        assert (ev.min_density_fps > 0) == (ev.kind == MOTION)
        prev_end = ev.end


def test_event_invariants_enforced():
    with pytest.raises(InvalidParams):
        Event(0, (10, 5), "x", 0.5, 0.0, "static")
    with pytest.raises(InvalidParams):
        Event(0, (0, 5), "x", 0.5, 0.5, "static")
    with pytest.raises(InvalidParams):
        Event(0, (0, 5), "x", 0.5, 0.0, "motion")
    with pytest.raises(InvalidParams):
        video_with(Event(0, (0, 500), "x", 0.5, 0.0, "static"))


def test_single_event_query():
    v = video_with(Event(0, (10, 20), "door opens", 0.25, 0.0, "static"))
    q = generate_query(v, 3, OPEN_ENDED)
    assert q.question == "What happens between 10 s and 20 s?"
    assert q.answer_gt == "door opens"
    assert q.evidence_windows == ((10, 20),)


def test_mcq_on_four_label_video():
    events = [Event(i, (10 + 25 * i, 30 + 25 * i), LABELS[i], 0.1, 0.0, "static") for i in range(4)]
    v = video_with(*events)
    for seed in range(20):
        q = generate_query(v, seed, MULTIPLE_CHOICE)
        assert len(q.choices) == 4
        assert q.answer_gt in {"A", "B", "C", "D"}
        if q.template != "counting":
            texts = {t for _, t in q.choices}
            assert texts <= set(LABELS)


def test_no_events():
    with pytest.raises(NoEvents):
        generate_query(video_with(), 0)


def test_mcq_invariants():
    with pytest.raises(InvalidParams):
        QueryInstance("q?", "E", MULTIPLE_CHOICE, (("A", "x"), ("B", "y")))
    with pytest.raises(InvalidParams):
        QueryInstance("q?", "A", MULTIPLE_CHOICE, (("A", "x"),))


def test_render_lists_choices_one_per_line():
    v = generate_video(5)
    q = generate_query(v, 5, MULTIPLE_CHOICE)
    assert parse_choices(q.render()) == list(q.choices)


@given(st.integers(0, 5_000), st.sampled_from([OPEN_ENDED, MULTIPLE_CHOICE]))
def test_oracle_soundness(seed, kind):
    v = generate_video(seed)
    q = generate_query(v, seed, kind)
    assert oracle_answer(v, q) == q.answer_gt


@given(st.integers(0, 5_000))
def test_evidence_windows_overlap_events(seed):
    v = generate_video(seed)
    q = generate_query(v, seed)
    for a, b in q.evidence_windows:
        assert any(min(b, ev.end) > max(a, ev.start) for ev in v.events)


def test_counting_answer_matches_timeline():
    v = video_with(
        Event(0, (5, 15), "door opens", 0.1, 0.0, "static"),
        Event(1, (20, 30), "dog runs", 0.1, 0.0, "static"),
        Event(2, (40, 50), "door opens", 0.1, 0.0, "static"),
    )
    for seed in range(30):
        q = generate_query(v, seed, OPEN_ENDED, template="counting")
        label = q.question.split('"')[1]
        assert q.answer_gt == str(timeline_count(v, label))
        assert oracle_answer(v, q) == q.answer_gt


def test_resize_threshold():
    v = video_with(Event(0, (10, 20), "cat jumps", 0.4, 0.0, "static"))
    assert observe(v, [15.0], 0.1)[0].labels == ()
    assert observe(v, [15.0], 0.5)[0].labels == ("cat jumps",)


def test_motion_density_rule():
    v = video_with(Event(0, (50, 100), "ball bounces", 0.1, 1.0, "motion"), duration=150.0)
    sparse = [50 + (i + 0.5) * 2 for i in range(25)]
    dense = [50 + (i + 0.5) for i in range(50)]
    assert not any(ob.labels for ob in observe(v, sparse, 1.0))
    assert all(ob.labels == ("ball bounces",) for ob in observe(v, dense, 1.0))


def test_observe_out_of_range():
    v = video_with(Event(0, (10, 20), "x", 0.1, 0.0, "static"))
    with pytest.raises(OutOfRange):
        observe(v, [-1.0], 0.5)
    with pytest.raises(OutOfRange):
        observe(v, [121.0], 0.5)


@given(
    st.integers(0, 2_000),
    st.lists(st.floats(0, 1), min_size=1, max_size=30),
    st.lists(st.floats(0, 1), max_size=30),
    st.sampled_from([0.1, 0.25, 0.5, 1.0]),
    st.sampled_from([0.1, 0.25, 0.5, 1.0]),
)
def test_monotone_observability(seed, base, extra, r1, r2):
    v = generate_video(seed, GeneratorConfig(motion_prob=0.5, density_choices=(0.25, 0.5, 1.0)))
    lo, hi = sorted((r1, r2))
    s = [f * v.duration_s for f in base]
    s_plus = s + [f * v.duration_s for f in extra]
    seen = {l for ob in observe(v, s, lo) for l in ob.labels}
    seen_more = {l for ob in observe(v, s_plus, hi) for l in ob.labels}
    assert seen <= seen_more


def test_observation_has_no_threshold_fields():
    v = generate_video(3)
    ob = observe(v, [v.duration_s / 2], 1.0)[0]
    keys = set(json.loads(json.dumps(ob.to_dict())))
    assert keys == {"timestamp", "resize", "labels"}


def test_round_trip():
    v = generate_video(11)
    assert SyntheticVideo.from_dict(json.loads(v.to_json())) == v
    q = generate_query(v, 11, MULTIPLE_CHOICE)
    assert QueryInstance.from_dict(json.loads(q.to_json())) == q
