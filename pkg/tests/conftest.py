from collections import defaultdict

import pytest

_outcomes: dict = defaultdict(list)
_titles: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    _titles[number] = title
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _outcomes[number].append((item.name, rep.passed))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_outcomes):
        results = _outcomes[number]
        ok = all(p for _, p in results)
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {_titles[number]}"
        failed = [name for name, p in results if not p]
        if failed:
            line += "  (failing: " + ", ".join(failed) + ")"
        terminalreporter.write_line(line)
