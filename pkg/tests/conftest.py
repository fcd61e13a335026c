"""Collects the one-line verdicts of the acceptance suite and prints them
after the run (they survive output capturing)."""
import pytest

_VERDICTS = []


@pytest.fixture
def verdict():
    def record(name, ok, detail=""):
        _VERDICTS.append(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
