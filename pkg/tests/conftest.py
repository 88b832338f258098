"""Collects acceptance-criterion outcomes and prints one verdict line each."""

from collections import defaultdict

import pytest

CRITERIA = {
    1: "power column within 0.005 kW",
    2: "consolidation energy, capacity and deltas",
    3: "solar fleet energy and capacity",
    4: "usable storage and battery feasibility",
    5: "efficiency orderings",
    6: "simulator runtime and recharge calibration",
    7: "simulator and planner property suites",
    8: "reproduce is deterministic and exits 0",
}

_outcomes: dict[int, list[bool]] = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion the test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _outcomes[marker.args[0]].append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, label in CRITERIA.items():
        results = _outcomes.get(n)
        if not results:
            verdict = "NOT RUN"
        else:
            verdict = "PASS" if all(results) else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {verdict}  {label} ({sum(results or [])}/{len(results or [])} checks)")
