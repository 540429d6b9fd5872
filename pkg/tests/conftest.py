import time
from pathlib import Path

import pytest

from ccmpath.cli import experiment, resolve_config_path
from ccmpath.config import load_config
from ccmpath.sim import run

ACCEPTANCE_LINES = []


def record_acceptance(number, passed, detail):
    line = f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


class _Runs:
    """Shipped-scenario simulations, computed once per session."""

    def __init__(self):
        self._cache = {}

    def config(self, scenario):
        return load_config(resolve_config_path(scenario))

    def get(self, scenario, kind):
        key = (scenario, kind)
        if key not in self._cache:
            spec = experiment(self.config(scenario), kind)
            t0 = time.perf_counter()
            log = run(spec)
            self._cache[key] = (log, time.perf_counter() - t0)
        return self._cache[key]


@pytest.fixture(scope="session")
def scenario_runs():
    return _Runs()


@pytest.fixture(scope="session")
def data_dir():
    return Path(__file__).parent / "data"
