import os

from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


import pytest


@pytest.fixture(scope="session")
def default_instance():
    """Default synthetic benchmark (published seed) and its candidates at the default threshold."""
    from graphweld.candidates import generate_candidates
    from graphweld.synthgen import SynthConfig, generate

    world, coll, truth = generate(SynthConfig())
    return world, coll, truth, generate_candidates(coll)


def pytest_terminal_summary(terminalreporter):
    from _helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
