import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, title = mark.args
    entry = _criteria.setdefault(num, {"title": title, "ok": True, "ran": False, "detail": []})
    if rep.failed:
        entry["ok"] = False
    if rep.when == "call":
        entry["ran"] = not rep.skipped
        entry["detail"] = [str(v) for k, v in item.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_criteria):
        e = _criteria[num]
        tag = "PASS" if e["ok"] and e["ran"] else ("SKIP" if e["ok"] else "FAIL")
        extra = f"  ({'; '.join(e['detail'])})" if e["detail"] else ""
        tr.write_line(f"[{tag}] criterion {num}: {e['title']}{extra}")
