import pytest

# criterion lines recorded by test_acceptance, echoed after the run
CRITERIA = []


@pytest.fixture
def record():
    def _record(number, ok, detail, seconds):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  [{seconds:7.1f} s]  {detail}"
        CRITERIA.append((number, line))
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(CRITERIA):
            terminalreporter.write_line(line)
