import pytest

_CRITERIA = []


@pytest.fixture
def criterion(capsys):
    """Record one acceptance line, echo it live and return whether it passed."""
    def record(num: int, name: str, passed: bool, detail: str) -> bool:
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {num:2d} {name}: {detail}"
        _CRITERIA.append((num, line))
        with capsys.disabled():
            print("\n" + line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_CRITERIA):
            terminalreporter.write_line(line)
