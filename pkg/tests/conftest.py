import pytest

_LINES = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number, ok, detail, seconds=None):
        timing = "" if seconds is None else f" [{seconds:.2f} s]"
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {detail}{timing}"
        _LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
