import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one acceptance line; it is echoed now and in the terminal summary."""

    def _record(number, name, passed, measured, tolerance):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number} {name}: measured={measured:.3e} tol={tolerance:.1e}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
