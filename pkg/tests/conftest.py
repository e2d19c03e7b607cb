import numpy as np
import pytest

from densched.extract import build_sample

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def layout(n, d):
    """Indicator with the first ``d`` of ``n`` positions dense."""
    ind = np.zeros(n, dtype=bool)
    ind[:d] = True
    return ind


@pytest.fixture
def code_sample():
    answer = "if a < b:\n    return a + b"
    return build_sample("c1", "add when ordered", answer, "code", [(3, 8), (21, 26)])
