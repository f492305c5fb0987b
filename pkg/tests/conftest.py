"""Per-criterion PASS/FAIL summary for the acceptance tests.

Acceptance tests carry ``@pytest.mark.criterion(number, title)`` and may
attach measured values with ``record_property``; both show up in one line
per criterion at the end of the run.
"""

import pytest

_RESULTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    entry = _RESULTS.setdefault(number, {"title": title, "ok": True, "ran": False, "details": []})
    if rep.when == "call" or rep.failed:
        entry["ran"] = True
        entry["ok"] = entry["ok"] and rep.passed
    if rep.when == "call":
        entry["details"] += [f"{k}={v}" for k, v in item.user_properties]


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        e = _RESULTS[number]
        status = "PASS" if e["ok"] and e["ran"] else ("FAIL" if e["ran"] else "SKIP")
        line = f"criterion {number:>2}: {status}  {e['title']}"
        if e["details"]:
            line += "  [" + ", ".join(e["details"]) + "]"
        terminalreporter.write_line(line)
