import pytest

ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record one acceptance criterion outcome for the terminal summary."""

    def record(number, title, passed, detail=""):
        ACCEPTANCE[number] = (title, bool(passed), detail)
        status = "PASS" if passed else "FAIL"
        print(f"[{status}] criterion {number}: {title} {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{status} {number:>2}. {title}: {detail}")
