import numpy as np
import pytest

from qvi_switch.mdp import validate
from qvi_switch.workbench import random_mdp, seed_streams


def seeded_mdp(seed, num_states, num_actions, gamma):
    return random_mdp(seed_streams(seed)["mdp"], num_states, num_actions, gamma)


def scalar_mdp(reward=0.5, gamma=0.9):
    return validate(1, 1, gamma, [[1.0]], [reward])


@pytest.fixture
def golden():
    """1 state, 1 action, R = 0.5, gamma = 0.9."""
    return scalar_mdp()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def acceptance_log(request):
    """Record one pass/fail line per acceptance criterion for the terminal summary."""
    return request.config.stash.setdefault(ACCEPTANCE_KEY, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(ACCEPTANCE_KEY, None)
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(log):
        ok, title, detail = log[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:2d}. {title}: {detail}")
