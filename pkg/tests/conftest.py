import pytest

_LINES = {}


@pytest.fixture
def criterion():
    """Record ``(number, passed, message)``; printed in the terminal summary."""

    def record(number, passed, message, seconds=None):
        tail = f" [{seconds:.1f}s]" if seconds is not None else ""
        _LINES[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {message}{tail}"
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_LINES):
            terminalreporter.write_line(_LINES[k])
