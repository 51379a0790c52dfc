"""Shared pytest hooks.

Acceptance tests register a one-line verdict through the ``verdict``
fixture; the lines are printed together at the end of the session.
"""

import pytest

_VERDICTS = {}


@pytest.fixture
def verdict():
    def record(number, ok, detail):
        _VERDICTS[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        print(_VERDICTS[number])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        terminalreporter.write_line(_VERDICTS[number])
