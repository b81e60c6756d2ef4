import numpy as np
import pytest

from mgpentest.dispatch import ControllerConfig
from mgpentest.scenario import Scenario, TouSchedule, bundled_scenario


@pytest.fixture(scope="session")
def scenario():
    return bundled_scenario()


@pytest.fixture(scope="session")
def config():
    return ControllerConfig()


def constant_scenario(load_kw: float, solar_kw: float, hours: int = 4,
                      tou: TouSchedule | None = None) -> Scenario:
    n = 60 * hours
    return Scenario.from_power(np.full(n, load_kw), np.full(n, solar_kw), tou)


# one line per acceptance criterion, printed after the run
VERDICTS: dict[int, str] = {}


def record_verdict(number: int, ok: bool, detail: str) -> None:
    VERDICTS[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
    print(VERDICTS[number])


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[n])
