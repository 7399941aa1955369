from contextlib import contextmanager

import numpy as np
import pytest

ACCEPTANCE_LINES: list[tuple[str, bool, str]] = []


def record_acceptance(name: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE_LINES.append((name, bool(passed), detail))


@contextmanager
def _criterion(name: str):
    """Record PASS when the block finishes and FAIL (re-raising) when it does not.

    The block may fill the yielded dict's ``detail`` entry with measured values.
    """
    info = {"detail": ""}
    try:
        yield info
    except BaseException:
        record_acceptance(name, False, info["detail"])
        raise
    record_acceptance(name, True, info["detail"])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} {name}" + (f"  ({detail})" if detail else ""))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def criterion():
    return _criterion
