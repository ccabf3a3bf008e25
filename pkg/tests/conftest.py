"""Shared pytest wiring: collect the acceptance lines and print them last."""

import pytest


def pytest_configure(config):
    config._acceptance_lines = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when != "call" or "test_acceptance" not in str(item.fspath):
        return
    # guarantee one line per criterion even if the test died before recording
    lines = item.config._acceptance_lines
    if item.name not in lines:
        status = "PASS" if rep.passed else "FAIL"
        lines[item.name] = f"[{status}] {item.name} (no detail recorded)"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
