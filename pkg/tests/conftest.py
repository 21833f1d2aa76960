import numpy as np
import pytest

from qsched.model import validate

ETA = [0.135, 0.232, 0.239, 0.394]
POWER_1E3 = [0.04, 0.08, 0.16, 10.14]


@pytest.fixture
def table_cfg():
    return validate([0.78, 0.14, 0.08], ETA, POWER_1E3, 40)


@pytest.fixture
def small_cfg():
    # heavy load, tiny buffer: boundary effects everywhere
    return validate([0.5, 0.3, 0.2], [0.4, 0.6], [1.0, 3.0], 5)


@pytest.fixture
def light_cfg():
    return validate([0.85, 0.1, 0.05], [0.5, 0.5], [1.0, 2.0], 60)


def random_config(rng: np.random.Generator, K: int, amax: float = 0.9, M: int | None = None,
                  W: int | None = None, amin: float = 0.05):
    # loads near zero make G entries grow like r0^-K and swamp double precision
    M = int(rng.integers(1, 4)) if M is None else M
    W = int(rng.integers(1, 4)) if W is None else W
    while True:
        th = rng.dirichlet(np.ones(M + 1))
        if amin <= th @ np.arange(M + 1) < amax:
            break
    eta = rng.dirichlet(np.ones(W))
    power = np.sort(rng.uniform(0.1, 5.0, W))
    return validate(th, eta, power, K)


# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
