import pytest

_LINES: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record the outcome line for an acceptance criterion."""

    def record(number: int, passed: bool, detail: str) -> None:
        _LINES[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(_LINES[number])

    return record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_LINES):
        terminalreporter.write_line(_LINES[number])
