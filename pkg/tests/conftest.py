"""Per-criterion pass/fail summary for tests marked ``acceptance``."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_results = {}  # criterion -> [passed, seconds]
_order = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(name): test counts toward the named acceptance criterion")


def pytest_runtest_logreport(report):
    name = getattr(report, "criterion", None)
    if name is None:
        return
    if name not in _results:
        _results[name] = [True, 0.0]
        _order.append(name)
    entry = _results[name]
    entry[0] = entry[0] and not (report.failed or report.skipped)
    entry[1] += report.duration  # includes fixture setup


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return None
    from _pytest.runner import TestReport

    rep = TestReport.from_item_and_call(item, call)
    rep.criterion = marker.args[0]
    return rep


def pytest_terminal_summary(terminalreporter):
    if not _order:
        return
    terminalreporter.section("acceptance criteria")
    for name in _order:
        ok, secs = _results[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  ({secs:.1f} s)")
