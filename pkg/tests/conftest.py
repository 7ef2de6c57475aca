from pathlib import Path

import pytest

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

# criterion number -> (passed, one-line detail); filled by test_acceptance
ACCEPTANCE: dict = {}


@pytest.fixture
def configs_dir():
    return CONFIGS


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {k:2d}: {detail}")
