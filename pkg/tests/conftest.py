import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pairpotts import lattice
from pairpotts.model import Params

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", deadline=None, max_examples=400)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def box1():
    return lattice.build_box(1)


@pytest.fixture(scope="session")
def box2():
    return lattice.build_box(2)


@pytest.fixture(scope="session")
def torus2():
    return lattice.build_torus(2)


@pytest.fixture(scope="session")
def prism():
    return lattice.build_prism()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ising():
    return Params(2, 2, 0.5, 0.5)


_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line; all lines are repeated in the terminal summary."""

    def record(label: str, ok: bool, detail: str = "") -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {label}: {detail}"
        print(line)
        _CRITERIA.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
