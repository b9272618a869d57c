import numpy as np
import pytest

from pocmab.streams import RandomStream


@pytest.fixture
def rng():
    return RandomStream(12345)


def random_spd(d: int, gen: np.random.Generator, jitter: float = 0.5) -> np.ndarray:
    a = gen.standard_normal((d, d))
    return a @ a.T + jitter * np.eye(d)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
