import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion covered by a test")
    config._acceptance = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    results = item.config._acceptance
    entry = results.setdefault(number, {"title": title, "passed": True, "ran": False, "notes": []})
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        entry["ran"] = True
        entry["passed"] = entry["passed"] and report.outcome == "passed"
        entry["notes"] += [f"{k}={v}" for k, v in report.user_properties]


def pytest_terminal_summary(terminalreporter, config):
    results = getattr(config, "_acceptance", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        entry = results[number]
        status = "PASS" if entry["passed"] and entry["ran"] else ("FAIL" if entry["ran"] else "NOT RUN")
        notes = f"  [{', '.join(entry['notes'])}]" if entry["notes"] else ""
        terminalreporter.write_line(f"criterion {number:>2} {status}: {entry['title']}{notes}")
