import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ncbf import acc  # noqa: E402
from ncbf.acc import AccParams, AccState, Barrier  # noqa: E402

SWEEP = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0)

# filled by test_acceptance.report(); printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture(scope="session")
def prm():
    return AccParams()


@pytest.fixture(scope="session")
def default_runs(prm):
    """Default sweep for both barriers, keyed by (barrier, v0)."""
    return {(b, v0): acc.simulate(AccState(v0, 100.0), prm, b)
            for b in (Barrier.NCBF, Barrier.HOCBF) for v0 in SWEEP}
