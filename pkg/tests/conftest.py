import numpy as np
import pytest

from factorbreak.dgp import DgpConfig, gen_panel

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def panel_1a_200():
    return gen_panel(DgpConfig(n_len=200, t_len=200, seed=7))
