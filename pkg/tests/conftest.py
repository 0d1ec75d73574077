import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one ``criterion N: PASS|FAIL ...`` line; returns the pass flag."""

    def record(number, ok, detail, expected_failure=False):
        tag = "PASS" if ok else ("FAIL (known, see ledger)" if expected_failure else "FAIL")
        line = f"criterion {number}: {tag} - {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
