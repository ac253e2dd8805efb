import numpy as np
import pytest

# criterion number -> (passed, detail); filled by the acceptance tests
ACCEPTANCE = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def verdict():
    """Record a criterion outcome, print it, then assert it."""

    def record(number, passed, detail):
        ACCEPTANCE[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}")
        assert passed, f"criterion {number}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'} | {detail}")
