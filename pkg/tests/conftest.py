import pytest

_ACCEPTANCE = {}


@pytest.fixture
def record_criterion():
    """Record a pass/fail line for an acceptance criterion; printed at session end."""

    def record(key, passed, detail):
        _ACCEPTANCE[key] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=lambda k: (int(k.rstrip("ab")), k)):
        passed, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:>3}: {'PASS' if passed else 'FAIL'}  {detail}")
