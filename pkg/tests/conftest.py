import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def snapshot():
    from neuroloop.harness import load_snapshot

    return load_snapshot(None)


@pytest.fixture(scope="session")
def core():
    from neuroloop import _backend

    mod = _backend.compiled()
    if mod is None:
        pytest.skip("compiled core not built")
    return mod
