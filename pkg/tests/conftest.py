"""Acceptance bookkeeping: tests marked ``acceptance(n, title)`` roll up into one line per criterion."""

import pytest

_results: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    cid, title = marker.args
    entry = _results.setdefault(cid, {"title": title, "ok": True, "notes": []})
    if rep.when == "call" or rep.failed:
        if rep.failed:
            entry["ok"] = False
        entry["notes"].extend(f"{k}={v}" for k, v in item.user_properties if rep.when == "call")


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_results):
        e = _results[cid]
        line = f"criterion {cid:>2}: {'PASS' if e['ok'] else 'FAIL'}  {e['title']}"
        if e["notes"]:
            line += "  [" + ", ".join(e["notes"]) + "]"
        terminalreporter.write_line(line)
