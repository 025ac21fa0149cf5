import pytest

_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one pass/fail line for the acceptance summary."""

    def record(number, title, ok, detail=""):
        line = f"criterion {number:<3} {'PASS' if ok else 'FAIL'}  {title}"
        if detail:
            line += f"  ({detail})"
        _LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
