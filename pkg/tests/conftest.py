import pytest

_OUTCOMES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or report.when != "call" and not report.failed:
        return
    number, title = mark.args
    ok = report.passed and _OUTCOMES.get(number, (title, True))[1]
    _OUTCOMES[number] = (title, ok)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        title, ok = _OUTCOMES[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:2d}  {title}")
