"""Prints one [PASS]/[FAIL] line per acceptance criterion at the end of a
run, outside pytest's output capture, so the verdicts always appear."""

import re

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")
_results: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    match = _CRITERION.search(report.nodeid)
    if not match:
        return
    num, slug = int(match.group(1)), match.group(2)
    if report.when == "call":
        _results[num] = (slug, "PASS" if report.outcome == "passed" else "FAIL")
    elif report.when == "setup" and report.outcome != "passed":
        _results[num] = (slug, "SKIP" if report.outcome == "skipped" else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for num in sorted(_results):
        slug, outcome = _results[num]
        terminalreporter.write_line(f"[{outcome}] criterion {num}: {slug.replace('_', ' ')}")
