import re

CRITERIA = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = (int(m.group(1)), m.group(2).replace("_", " "))
    if report.when == "call" or report.failed or report.skipped:
        if report.failed:
            CRITERIA[key] = "FAIL"
        elif report.skipped:
            CRITERIA.setdefault(key, "SKIP")
        else:
            CRITERIA.setdefault(key, "PASS")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (n, name), outcome in sorted(CRITERIA.items()):
        terminalreporter.write_line(f"criterion {n} ({name}): {outcome}")
