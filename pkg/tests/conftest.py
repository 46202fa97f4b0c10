import numpy as np
import pytest

# (criterion id, title, passed, detail) collected by test_acceptance
ACCEPTANCE_RESULTS: list[tuple[str, str, bool, str]] = []


@pytest.fixture
def rng():
    return np.random.default_rng(20261017)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid, title, ok, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: int(r[0])):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {cid:>2}. {title}: {detail}")
