import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hris_dfrc.orchestrator import OptimizerConfig, run
from hris_dfrc.scene import build_channels, table1_scene

settings.register_profile("repo", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def table1():
    scene = table1_scene()
    return scene, build_channels(scene)


@pytest.fixture(scope="session")
def table1_timed(table1):
    """The optimized evaluation design and its wall time in seconds (about ten)."""
    scene, channels = table1
    t0 = time.perf_counter()
    res = run(scene, OptimizerConfig(), channels)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="session")
def table1_run(table1_timed):
    return table1_timed[0]


ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    """Collects the one-line verdicts of the acceptance criteria."""
    return request.config.stash.setdefault(ACCEPTANCE_LINES, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
