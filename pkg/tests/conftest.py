import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def within(est, ref, se, k=3.0):
    return abs(est - ref) <= k * se


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion, echoed in the terminal summary."""
    def record(k, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
        _VERDICTS.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
