import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import acceptance_log
from incomepool.simulate import PoolingRegime, SimConfig, simulate_panel


@pytest.fixture(scope="session")
def small_panel():
    return simulate_panel(SimConfig(n_households=120, seed=11), PoolingRegime.full())


@pytest.fixture(scope="session")
def default_panel():
    return simulate_panel(SimConfig(seed=3), PoolingRegime.parse("partial:food"))



def pytest_terminal_summary(terminalreporter):
    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(acceptance_log.LINES):
            terminalreporter.write_line(acceptance_log.LINES[n])
