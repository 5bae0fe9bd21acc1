import numpy as np
import pytest

ACCEPTANCE_LINES: dict[str, str] = {}


def record(criterion, passed: bool, detail: str) -> bool:
    """Store the one-line verdict printed at the end of the session.

    ``criterion`` is a number or a label such as ``"8c"`` for one part of a
    multi-part criterion.
    """
    key = f"{criterion:>3}" if isinstance(criterion, str) else f"{criterion:>2} "
    status = "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES[key] = f"criterion {key}: {status}  {detail}"
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
