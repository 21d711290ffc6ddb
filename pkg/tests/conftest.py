import pytest

from builders import mini_bat, mini_catalog, mini_spec

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    number = getattr(report, "criterion", None)
    if number is None:
        return
    title, ok = _CRITERIA.get(number, ("", True))
    _CRITERIA[number] = (title, ok and report.passed)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        number, title = marker.args
        report.criterion = number
        _CRITERIA.setdefault(number, (title, True))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}")


@pytest.fixture
def bat():
    return mini_bat()


@pytest.fixture
def spec():
    return mini_spec()


@pytest.fixture
def catalog():
    return mini_catalog()
