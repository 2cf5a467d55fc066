"""Collects acceptance outcomes so the run ends with one line per criterion."""

from collections import defaultdict

import pytest

CRITERIA = {
    1: "detectability per signal class, runtime < 5 s",
    2: "ABM clipping, gain, phase and passband loss",
    3: "duty resolution and DC error bound",
    4: "timing band and calibrated loop rates",
    5: "TAP reset, bypass delay and configure cost",
    6: "fault avoidance with one AT1/AT2 pair",
    7: "interchangeable driver rotation",
    8: "startup policy",
    9: "remote operation sequence",
    10: "deterministic event logs",
}

_outcomes = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion this test covers")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            item.user_properties.append(("criterion", m.args[0]))


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    if report.when == "call" or report.outcome != "passed":
        _outcomes[crit].append(report.outcome == "passed")


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, title in CRITERIA.items():
        runs = _outcomes.get(n)
        status = "NOT RUN" if not runs else ("PASS" if all(runs) else "FAIL")
        tr.write_line(f"AC{n:<3} {status:<8} {title}")
