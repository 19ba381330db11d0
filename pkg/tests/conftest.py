from __future__ import annotations

import pytest

from gevreylab import construct
from gevreylab.params import ParameterSet

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def ps235() -> ParameterSet:
    return ParameterSet(2, 3, 5)


@pytest.fixture(scope="session")
def c235(ps235) -> construct.Construction:
    """Ground-state construction for (2,3,5) shared across modules."""
    return construct.build(ps235, 0, 0, per_decade=20)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
