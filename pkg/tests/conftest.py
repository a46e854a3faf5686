import pytest

ACCEPTANCE_LINES: dict = {}


@pytest.fixture(scope="session")
def acceptance_report():
    """Collects one PASS/FAIL line per acceptance criterion, keyed by criterion number."""
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
