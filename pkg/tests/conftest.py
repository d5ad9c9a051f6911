import numpy as np
import pytest

from ganirl.cost import tabular_cost
from ganirl.mdp import build_gridworld
from ganirl.policy import random_policy, soft_value_iteration
from ganirl.rng import stream


@pytest.fixture
def world_2x2():
    return build_gridworld(2, 2, start=0, horizon=3)


@pytest.fixture
def world_3x3():
    return build_gridworld(3, 3, start=4, horizon=5)


def random_tabular(mdp, rng, scale=1.0):
    return tabular_cost(scale * rng.standard_normal(mdp.n_states * mdp.n_actions),
                        (mdp.n_states, mdp.n_actions))


def random_setup(mdp, seed):
    """(learned cost, expert policy, full-support generator) for one seed."""
    rng = stream(seed, "fixture")
    cost = random_tabular(mdp, rng, 0.5)
    expert = soft_value_iteration(mdp, random_tabular(mdp, rng, 0.5))
    policy = random_policy(mdp, rng)
    return cost, expert, policy


ACCEPTANCE_LINES = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    """One pass/fail line per acceptance criterion, echoed now and in the summary."""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
