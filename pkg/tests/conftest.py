"""Shared test plumbing: the acceptance suite records one pass/fail line per
criterion and this hook replays them in the terminal summary, so the verdict
is visible even with output capture on."""

import pytest

_CRITERION_LINES: list = []


@pytest.fixture(scope="session")
def criterion_report():
    def record(num: int, slug: str, ok: bool, detail: str) -> bool:
        line = (f"acceptance {num:02d} {slug}: "
                f"{'PASS' if ok else 'FAIL'} ({detail})")
        _CRITERION_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter, exitstatus):
    if _CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERION_LINES:
            terminalreporter.write_line(line)
