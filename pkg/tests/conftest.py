import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from relaxlab import make_builtin, to_cd_form

settings.register_profile("relaxlab", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "relaxlab"))

ACCEPTANCE_LINES = {}


def record_criterion(number: int, passed: bool, detail: str) -> str:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture(scope="session")
def psys10():
    return make_builtin("p_system", (1, 0))


@pytest.fixture(scope="session")
def psys21():
    return make_builtin("p_system", (2, 1))


@pytest.fixture(scope="session")
def cd10(psys10):
    return to_cd_form(psys10)[1]


@pytest.fixture(scope="session")
def cd21(psys21):
    return to_cd_form(psys21)[1]


def random_h1_system(rng, m, n1, n2):
    """Reverse construction: pick A0, symmetric S_alpha and D, then A = S A0^-1, B = diag(0, D) A0^-1."""
    from relaxlab import RawSystem

    n = n1 + n2
    X = rng.normal(size=(n, n))
    A0 = X @ X.T + n * np.eye(n)
    A0i = np.linalg.inv(A0)
    A = []
    for _ in range(m):
        S = rng.normal(size=(n, n))
        A.append((S + S.T) @ A0i)
    Y = rng.normal(size=(n2, n2))
    D = -(Y @ Y.T + np.eye(n2))
    BA0 = np.zeros((n, n))
    BA0[n1:, n1:] = D
    B = BA0 @ A0i
    B[:n1] = 0.0
    return RawSystem(m, n1, n2, tuple(A), B, A0)
