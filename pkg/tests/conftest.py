import numpy as np
import pytest

_CRITERIA: dict = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def record_criterion():
    """Store one pass/fail line per acceptance criterion for the terminal summary."""

    def record(number, passed, detail="", key=""):
        label = f"{number} ({key})" if key else str(number)
        _CRITERIA[(number, key)] = (label, bool(passed), detail)
        print(f"criterion {label}: {'PASS' if passed else 'FAIL'} {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA):
        label, passed, detail = _CRITERIA[key]
        terminalreporter.write_line(f"criterion {label}: {'PASS' if passed else 'FAIL'}  {detail}")
