import os
import time

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=400, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_CRITERIA: list[str] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    setattr(item, f"rep_{rep.when}", rep)


class CriterionLog:
    """Collects the measured quantities of one acceptance criterion."""

    def __init__(self, number: int, title: str, limit_s: float):
        self.number, self.title, self.limit_s = number, title, limit_s
        self.details: list[str] = []
        self.start = time.perf_counter()

    def note(self, text: str) -> None:
        self.details.append(text)

    def elapsed(self) -> float:
        return time.perf_counter() - self.start

    def check_runtime(self) -> None:
        t = self.elapsed()
        limit = f"limit {self.limit_s:g}s" if self.limit_s != float("inf") else "no limit"
        self.note(f"runtime {t:.2f}s ({limit})")
        assert t < self.limit_s, f"runtime {t:.2f}s exceeds {self.limit_s:g}s"


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("criterion")
    log = CriterionLog(*marker.args)
    yield log
    rep = getattr(request.node, "rep_call", None)
    verdict = "PASS" if rep is not None and rep.passed else "FAIL"
    line = f"criterion {log.number} [{verdict}] {log.title}: " + "; ".join(log.details)
    _CRITERIA.append(line)
    print("\n" + line)


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
