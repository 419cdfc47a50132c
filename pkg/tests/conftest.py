import pytest

_ACCEPTANCE = []


def record_criterion(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    _ACCEPTANCE.append(line)
    print(line)


@pytest.fixture
def criterion():
    """Record one acceptance line, then assert it."""
    def check(name, ok, detail=""):
        record_criterion(name, bool(ok), detail)
        assert ok, f"{name}: {detail}"
    return check


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
