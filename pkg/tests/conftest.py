"""Shared pytest plumbing.

The acceptance suite (tests/test_acceptance.py) gets a one-line PASS/FAIL
verdict per criterion in the terminal summary, independent of -v/-q flags.
"""

from __future__ import annotations

import pytest

_ACCEPTANCE_RESULTS: list[tuple[str, str]] = []


def pytest_runtest_logreport(report: pytest.TestReport) -> None:
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        _ACCEPTANCE_RESULTS.append((name, report.outcome.upper()))


def pytest_terminal_summary(terminalreporter, exitstatus, config) -> None:
    if not _ACCEPTANCE_RESULTS:
        return
    tw = terminalreporter
    tw.section("acceptance criteria")
    for name, outcome in _ACCEPTANCE_RESULTS:
        tw.write_line(f"{'PASS' if outcome == 'PASSED' else 'FAIL'}  {name}")
