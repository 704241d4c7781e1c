import pytest

from heavylight.config import GridParams, Packet, SystemConfig

ACCEPTANCE_LINES: list[str] = []

# reduced grids for multi-particle runs: 64-point heavy axis, 256-point light axes
SMALL_GRID = GridParams(64, 12.0, 256, 96.0)
LIGHT_PACKET = Packet((-10.0,), (2.0,), 1.5)


def small_config(N: int = 1, **kw) -> SystemConfig:
    return SystemConfig(N=N, initial_chis=(LIGHT_PACKET,) * N, grid=SMALL_GRID, **kw)


@pytest.fixture(scope="session")
def default_config():
    return SystemConfig()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
