"""One PASS/FAIL line per acceptance criterion at the end of the run."""
import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_outcomes = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    ok = _outcomes.setdefault(n, [])
    if report.when == "call" or report.failed:
        ok.append(report.passed and not report.skipped)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        status = "PASS" if _outcomes[n] and all(_outcomes[n]) else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {status}")
