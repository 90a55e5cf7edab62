import pytest

# criterion -> (passed, number of rows, first failing check)
ACCEPTANCE = {}


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    from rwce.checks import ANCHORS
    terminalreporter.section("acceptance criteria")
    for i in sorted(ACCEPTANCE):
        ok, n, bad = ACCEPTANCE[i]
        tail = f"{n} checks" if ok else f"failed: {bad}"
        terminalreporter.write_line(f"criterion {i:2d} [{ANCHORS[i]}]: {'PASS' if ok else 'FAIL'} ({tail})")
