import pytest

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, label): acceptance criterion covered by a test")
    config.addinivalue_line("markers", "slow: long end-to-end run")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call" and not (call.when == "setup" and call.excinfo):
        return
    number, label = mark.args
    entry = _criteria.setdefault(number, {"label": label, "ok": True, "tests": 0})
    entry["tests"] += 1
    if call.excinfo is not None:
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        status = "PASS" if e["ok"] else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2} {status}  {e['label']} ({e['tests']} checks)")
