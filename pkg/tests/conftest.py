import numpy as np
import pytest

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def detail(request):
    """Free-text measurement attached to the acceptance summary line."""
    lines = []
    request.node.user_properties.append(("detail", lines))
    return lines


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and not report.failed:
        return
    n = marker.args[0]
    notes = [line for key, lines in item.user_properties if key == "detail" for line in lines]
    _criteria[n] = ("PASS" if report.passed else "FAIL", item.name, notes)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        status, name, notes = _criteria[n]
        terminalreporter.write_line(f"criterion {n}: {status}  ({name})")
        for line in notes:
            terminalreporter.write_line(f"    {line}")
