import pytest

# (criterion, title, passed, detail) rows filled by test_acceptance.py
ACCEPTANCE: list[tuple[int, str, bool, str]] = []


def record(criterion: int, title: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE.append((criterion, title, bool(passed), detail))
    print(f"criterion {criterion:2d} {'PASS' if passed else 'FAIL'}  {title}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, title, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}  {detail}")


@pytest.fixture
def rec():
    return record
