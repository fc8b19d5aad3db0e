import time

import pytest

from ecoplatoon.report import compare_strategies
from ecoplatoon.sim import STRATEGIES, ScenarioConfig


@pytest.fixture(scope="session")
def us06_run():
    """Default US06 scenario for all three strategies, run once per session, with its wall time."""
    t0 = time.perf_counter()
    report, logs = compare_strategies([ScenarioConfig(strategy=s) for s in STRATEGIES])
    return report, logs, time.perf_counter() - t0


@pytest.fixture(scope="session")
def us06_comparison(us06_run):
    report, logs, _ = us06_run
    return report, logs
