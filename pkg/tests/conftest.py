"""Prints one PASS/FAIL line per acceptance criterion at the end of the run."""
import pytest

_OUTCOMES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n = mark.args[0]
    detail = dict(item.user_properties).get("detail", "")
    if report.when == "call" or (report.when == "setup" and not report.passed):
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        prev = _OUTCOMES.get(n)
        # a criterion split over several tests passes only if all of them pass
        if prev is None or prev[0] == "PASS":
            _OUTCOMES[n] = (status, item.name, detail)
        line = f"ACCEPTANCE criterion {n}: {status} ({item.name}) {detail}".rstrip()
        print("\n" + line)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_OUTCOMES):
        status, name, detail = _OUTCOMES[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {name}  {detail}".rstrip())
