import numpy as np
import pytest

from kscert.integrate import QuadSpec
from kscert.mayer import MayerEvaluator, _expansion
from kscert.potential import PairPotential

SOFT = PairPotential.soft_core(1.0, 0.05)
Z = 0.05


@pytest.fixture(scope="session")
def soft_exp():
    """Series for the soft core eps = 0.05, beta = 1, on the line, P_max = 4."""
    return _expansion(SOFT, 1.0, 1, QuadSpec(), 4)


@pytest.fixture(scope="session")
def soft_ev(soft_exp):
    return MayerEvaluator(soft_exp, Z, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, text = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {text}")
