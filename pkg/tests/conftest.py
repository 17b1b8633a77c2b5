from __future__ import annotations

import numpy as np
import pytest

_CRITERIA: dict[str, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(cid, title): acceptance criterion this test contributes to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        cid, title = marker.args
        entry = _CRITERIA.setdefault(cid, {"title": title, "ok": True, "notes": []})
        entry["ok"] &= report.passed
        entry["notes"] += [f"{k}={v}" for k, v in report.user_properties]


def _order(cid: str):
    digits = "".join(ch for ch in cid if ch.isdigit())
    return int(digits or 0), cid


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_CRITERIA, key=_order):
        e = _CRITERIA[cid]
        status = "PASS" if e["ok"] else "FAIL"
        notes = f"  [{'; '.join(e['notes'])}]" if e["notes"] else ""
        terminalreporter.write_line(f"{status}  criterion {cid}: {e['title']}{notes}")


@pytest.fixture
def gen():
    return np.random.default_rng(20240601)
