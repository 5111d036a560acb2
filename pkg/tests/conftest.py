import sys

import pytest
from hypothesis import settings

from cbfnav.config import preset
from cbfnav.harness import run_scenario

# some properties run small simulations; wall-clock deadlines only add flakiness
settings.register_profile("default", deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def run1_result():
    return run_scenario(preset("run1"))


def pytest_terminal_summary(terminalreporter):
    REPORT = getattr(sys.modules.get("test_acceptance"), "REPORT", [])

    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
