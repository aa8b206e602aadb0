import sys

import pytest
from hypothesis import HealthCheck, settings

from vidagent.video import Event, SyntheticVideo

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def fig7_video():
    """397 s video with one fine-detail event in [200, 250] and a coarse one earlier."""
    return SyntheticVideo(
        duration_s=397.0,
        native_resolution=(1280, 720),
        events=(
            Event(0, (40.0, 80.0), "person waves", 0.1, 0.0, "static"),
            Event(1, (200.0, 250.0), "cat jumps", 0.4, 0.0, "static"),
        ),
        seed=0,
    )


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
