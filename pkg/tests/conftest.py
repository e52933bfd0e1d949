import pytest

_LINES = {}


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(n, title, ok, detail)``."""

    def record(n, title, ok, detail=""):
        line = f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
        _LINES[n] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_LINES):
            terminalreporter.write_line(_LINES[n])
