import pytest

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config.addinivalue_line("markers", "slow: full benchmark experiments (minutes each)")
    config.stash[_RESULTS] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and not report.failed):
        return
    number, title = marker.args
    entry = item.config.stash[_RESULTS].setdefault(
        number, {"title": title, "ok": True, "details": []})
    entry["ok"] = entry["ok"] and report.passed
    entry["details"].extend(v for k, v in item.user_properties if k == "detail")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        entry = results[number]
        status = "PASS" if entry["ok"] else "FAIL"
        terminalreporter.line(f"criterion {number:2d} {status}  {entry['title']}")
        for detail in entry["details"]:
            terminalreporter.line(f"             {detail}")
