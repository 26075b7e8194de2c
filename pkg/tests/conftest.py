import numpy as np
import pytest

_results = {}


def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if crit is None:
        return
    if report.when == "call" or report.outcome != "passed":
        ok = report.outcome == "passed"
        prev = _results.get(crit, (True, 0, []))
        details = prev[2] + [v for k, v in report.user_properties if k == "detail"]
        _results[crit] = (prev[0] and ok, prev[1] + (report.when == "call"), details)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        report.criterion = int(marker.args[0])


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_results):
        ok, n, details = _results[crit]
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'} ({n} checks)")
        for d in details:
            terminalreporter.write_line(f"    {d}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
