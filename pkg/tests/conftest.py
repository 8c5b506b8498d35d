import pytest

# criterion lines collected by the acceptance suite, echoed in the summary
CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        print(line)
        CRITERIA.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
