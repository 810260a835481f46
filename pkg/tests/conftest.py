import numpy as np
import pytest

from qdlearn.mdp import MdpModel, random_model


def brute_force_q(kernel, means, gamma, iterations=1_000_000):
    """Plain-Python fixed-point iteration of the averaged Q-operator.

    Written with explicit loops so it shares no code with the library.
    Stops early only once an iterate reproduces itself bit for bit, after
    which every further iteration would be identical.
    """
    M, U = len(kernel), len(kernel[0])
    N = len(means)
    avg = [[sum(means[n][i][u] for n in range(N)) / N for u in range(U)] for i in range(M)]
    q = [[0.0] * U for _ in range(M)]
    for _ in range(iterations):
        v = [min(row) for row in q]
        new = [
            [avg[i][u] + gamma * sum(kernel[i][u][j] * v[j] for j in range(M)) for u in range(U)]
            for i in range(M)
        ]
        if new == q:
            break
        q = new
    return np.array(q)


def policy_evaluation_q(model, policy):
    """Exact Q of a fixed stationary policy by one linear solve."""
    M = model.num_states
    P = model.kernel[np.arange(M), policy]
    c = model.average_cost[np.arange(M), policy]
    v = np.linalg.solve(np.eye(M) - model.discount * P, c)
    return model.average_cost + model.discount * model.kernel @ v


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_model(rng):
    return random_model(rng, 2, 2, 3, discount=0.7, cost_noise_std=np.sqrt(40.0))


def scalar_model(mean=1.0, gamma=0.5, std=0.0):
    return MdpModel(np.ones((1, 1, 1)), np.full((1, 1, 1), mean), std, gamma)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
