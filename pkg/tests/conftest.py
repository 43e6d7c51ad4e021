import pytest

RESULTS = []


@pytest.fixture
def criterion():
    """Record one acceptance line and assert it."""
    def record(number, ok, detail):
        RESULTS.append((number, bool(ok), detail))
        assert ok, f"criterion {number}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(RESULTS, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
