import numpy as np
import pytest

from wlanlogconv.model import WlanParams

ACCEPTANCE_LINES = []


@pytest.fixture
def two_station():
    """Two stations, sigma/t_c = 1/10, t_s = t_c."""
    return WlanParams(2, 10.0, 100.0, 100.0, [8000.0, 8000.0])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_params(rng, n, capped=False):
    sigma = rng.uniform(1.0, 50.0)
    t_c = sigma * rng.uniform(1.0, 40.0)
    t_s = t_c * rng.uniform(1.0, 3.0)
    payloads = rng.uniform(100.0, 12000.0, size=n)
    tau_bar = rng.uniform(0.05, 0.95, size=n) if capped else None
    return WlanParams(n, sigma, t_s, t_c, payloads, tau_bar)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
