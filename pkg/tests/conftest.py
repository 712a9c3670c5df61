import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ymhadamard.harness import RunConfig, run_pipeline

settings.register_profile("ymh", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ymh")

SMALL = dict(N=6, M=2, K=32, T=0.25)


@pytest.fixture(scope="session")
def small_state():
    report, state = run_pipeline(RunConfig(**SMALL), keep_state=True)
    return report, state


@pytest.fixture(scope="session")
def flat_state():
    report, state = run_pipeline(RunConfig(**SMALL, amplitude=0.0), keep_state=True)
    return report, state


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_LINES = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """record(criterion, ok, detail): one pass/fail line per acceptance criterion."""
    lines = request.config.stash.setdefault(_LINES, [])

    def record(name: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        lines.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
