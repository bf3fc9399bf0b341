import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_outcomes: dict[str, list[tuple[str, str]]] = {}
_titles: dict[str, str] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark:
            crit = str(mark.args[0])
            _titles.setdefault(crit, mark.kwargs.get("title", ""))
            item.user_properties.append(("criterion", crit))


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = "skipped" if report.skipped else report.outcome
        _outcomes.setdefault(crit, []).append((report.nodeid, outcome))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(_outcomes, key=lambda c: int(c)):
        results = [o for _, o in _outcomes[crit]]
        if "failed" in results:
            verdict = "FAIL"
        elif all(o == "skipped" for o in results):
            verdict = "SKIP"
        else:
            verdict = "PASS"
        n_pass = results.count("passed")
        tr.write_line(f"criterion {crit}: {verdict} ({n_pass}/{len(results)} checks passed) {_titles.get(crit, '')}")


@pytest.fixture
def tmp_cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path
