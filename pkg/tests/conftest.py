import pytest

_acceptance_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and item.fspath.basename == "test_acceptance.py":
        _acceptance_results[item.name] = report.outcome


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _acceptance_results:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name in sorted(_acceptance_results):
            status = "PASS" if _acceptance_results[name] == "passed" else "FAIL"
            terminalreporter.write_line(f"{status}  {name}")
