"""Shared fixtures and the acceptance summary printed at the end of a run."""
import re

import pytest

ACCEPTANCE_DETAILS: dict[int, str] = {}

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_")


@pytest.fixture
def record():
    """``record(number, detail)`` attaches measured values to a criterion's summary line."""

    def _record(number: int, detail: str):
        ACCEPTANCE_DETAILS[number] = detail

    return _record


def pytest_terminal_summary(terminalreporter):
    outcomes = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            m = _CRITERION.search(getattr(rep, "nodeid", ""))
            if m and (rep.when == "call" or key == "error"):
                outcomes[int(m.group(1))] = "PASS" if key == "passed" else "FAIL"
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(outcomes):
        detail = ACCEPTANCE_DETAILS.get(n, "")
        terminalreporter.write_line(f"criterion {n:2d}: {outcomes[n]}  {detail}".rstrip())
