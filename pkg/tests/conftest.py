import numpy as np
import pytest

from stablesheets.rng import stream


@pytest.fixture
def rng(request):
    # one independent stream per test, keyed by the test name
    return stream(20261016, request.node.name)


def within_se(est, target, se, k=3.0):
    return np.all(np.abs(np.asarray(est) - np.asarray(target)) <= k * np.asarray(se))


_ACCEPTANCE_LINES: list = []


@pytest.fixture
def verdict():
    """Print and record one pass/fail line for an acceptance criterion."""

    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"{label} {'PASS' if ok else 'FAIL'}: {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
