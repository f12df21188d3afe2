from pathlib import Path

import pytest

from liftdo.fixtures import employee_model
from liftdo.grounding import ground

DATA = Path(__file__).parent / "data"


@pytest.fixture
def employees():
    return employee_model()


@pytest.fixture
def seeded():
    return employee_model(seed=42)


@pytest.fixture
def seeded_gm(seeded):
    return ground(seeded)


@pytest.fixture
def data_dir():
    return DATA


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid or rep.when != "call":
                continue
            name = nodeid.split("::test_criterion_")[1]
            num, _, label = name.partition("_")
            lines.append((int(num), f"criterion {num}: {'PASS' if outcome == 'passed' else 'FAIL'} ({label})"))
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
