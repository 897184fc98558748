import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fadingctl.harness import load_scenario

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

FIG3_A = np.array([[0.01, -1.02, 0.3], [-0.1, 1.01, 0.2], [-0.5, 0.1, 0.2]])
FIG3_B = np.array([[1.1, 0.2], [-0.2, 0.6], [-0.3, 0.2]])


@pytest.fixture(scope="session")
def fig3():
    return load_scenario("fig3.cfg")


@pytest.fixture(scope="session")
def fig3_pstar(fig3):
    from fadingctl.harness.runner import nme_solution
    return nme_solution(fig3).p_star


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_psd(rng, S, rank=None, scale=1.0):
    rank = S if rank is None else rank
    G = rng.standard_normal((S, rank))
    return scale * (G @ G.T)


def random_pd(rng, S):
    return random_psd(rng, S) + 0.1 * np.eye(S)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
