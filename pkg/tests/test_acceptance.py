"""Acceptance gate: every numerical check at its stated tolerance.

One PASS/FAIL line per criterion is printed in the terminal summary.
"""

import pytest

from conftest import ACCEPTANCE_LINES
from qtgrad.verify import CHECKS


@pytest.mark.parametrize("check", CHECKS, ids=[c.__name__ for c in CHECKS])
def test_criterion(check):
    result = check(0)
    ACCEPTANCE_LINES.append(result.line())
    assert result.passed, result.detail
