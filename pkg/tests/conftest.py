import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

_CRITERIA = {}


def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if crit is None:
        for key, value in report.user_properties:
            if key == "criterion":
                crit = value
    if crit is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        prev = _CRITERIA.get(crit, "PASS")
        _CRITERIA[crit] = "PASS" if prev == "PASS" and report.outcome == "passed" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_CRITERIA, key=lambda c: int(c.split(":")[0])):
        terminalreporter.write_line(f"criterion {crit}: {_CRITERIA[crit]}")
