import functools
import time
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from mpcguide.harness import run_scenario
from mpcguide.scenario import load_scenario

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

_ACCEPTANCE: dict[int, str] = {}
RUN_SECONDS: dict[str, float] = {}


@functools.lru_cache(maxsize=None)
def cached_run(name: str):
    """Closed-loop runs are expensive; share one result per shipped scenario."""
    t0 = time.perf_counter()
    result = run_scenario(load_scenario(SCENARIOS / f"{name}.json"))
    RUN_SECONDS[name] = time.perf_counter() - t0
    return result


@pytest.fixture
def record_criterion():
    def record(number: int, passed: bool, detail: str) -> None:
        _ACCEPTANCE[number] = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(_ACCEPTANCE[number])

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[k])
