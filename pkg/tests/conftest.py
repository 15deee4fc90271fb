import pytest

from chebident.harness import DEFAULT_CONFIG, load_config, run_experiment

_criteria = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion reported in the summary")


@pytest.fixture(scope="session")
def sl_config():
    return load_config(DEFAULT_CONFIG)


@pytest.fixture(scope="session")
def sl_report(sl_config):
    return run_experiment(sl_config)


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    label = report.user_properties and dict(report.user_properties).get("criterion")
    if label:
        _criteria.append((label, report.outcome))


def pytest_runtest_setup(item):
    marker = item.get_closest_marker("criterion")
    if marker:
        item.user_properties.append(("criterion", marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for label, outcome in _criteria:
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] {label}")
