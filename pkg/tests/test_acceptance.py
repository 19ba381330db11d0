"""Acceptance criteria 1-11, one test each, full profile.

Every test prints a single ``[PASS]``/``[FAIL]`` line with the measured
values; the same lines are repeated in the pytest terminal summary.  Run as
a script (``python tests/test_acceptance.py``) to get only the lines.
"""

from __future__ import annotations

import sys

import pytest

from gevreylab import acceptance
from gevreylab.params import ParameterSet

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # run as a script
    ACCEPTANCE_LINES = []


@pytest.fixture(scope="module")
def ctx():
    return acceptance.Context(ParameterSet(2, 3, 5), fast=False, seed=0)


@pytest.mark.parametrize("cid", range(1, len(acceptance.CHECKS) + 1))
def test_criterion(ctx, cid, capsys):
    fn = acceptance.CHECKS[cid - 1]
    try:
        chk = fn(ctx)
    except Exception as exc:
        chk = acceptance.Check(cid, fn.__name__, False, {"error": f"{type(exc).__name__}: {exc}"})
    line = chk.line()
    ACCEPTANCE_LINES.append(line)
    with capsys.disabled():
        print("\n" + line)
    assert chk.passed, line


if __name__ == "__main__":
    checks = acceptance.run_all(ParameterSet(2, 3, 5), echo=print)
    sys.exit(0 if all(c.passed for c in checks) else 1)
