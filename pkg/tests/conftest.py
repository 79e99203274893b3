import os

import pytest

# Acceptance tests record one line each; they are echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    def record(number: int, passed: bool, detail: str) -> None:
        ACCEPTANCE_LINES.append(f"{'PASS' if passed else 'FAIL'} criterion {number:>2}: {detail}")
        print(ACCEPTANCE_LINES[-1])

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)


def pytest_configure(config):
    os.environ.setdefault("SOBLAB_THREADS", str(min(8, os.cpu_count() or 1)))
