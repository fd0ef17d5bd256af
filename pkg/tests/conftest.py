import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_LINES = []


@pytest.fixture(scope="session")
def criterion_log():
    """Record one graded line per acceptance criterion; echoed at the end of the run."""

    def record(tag, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {tag}: {detail}"
        _LINES.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=_order):
            terminalreporter.write_line(line)


def _order(line):
    tag = line.split("criterion ", 1)[1].split(":", 1)[0]
    num = "".join(ch for ch in tag if ch.isdigit())
    return (int(num) if num else 99, tag)
