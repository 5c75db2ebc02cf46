import numpy as np
import pytest

from trailer_mpc.harness import PathSpec, Scenario
from trailer_mpc.vehicle import ms2t_config

# lines collected by the acceptance module, echoed after the test summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def reverse_scenario(controller="ms2t-mpc", duration=40.0, perturbation=(0.0, 0.0, 0.6, -0.6), **kw):
    """Straight backward run from a joint-angle perturbation."""
    base = Scenario(vehicle=ms2t_config(), path=PathSpec("straight"), v0=-1.0, duration=duration,
                    perturbation=perturbation, **kw)
    return base.with_controller(controller)


@pytest.fixture
def cfg():
    return ms2t_config()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
