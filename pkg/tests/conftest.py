import numpy as np
import pytest

from maglev_ff.params import PlantParams

# acceptance criterion -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def nominal():
    return PlantParams()


@pytest.fixture(scope="session")
def undamped():
    return PlantParams(c=(0.0,) * 6)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_state(rng, angle=1e-3, rate=1e-2, trans=1e-2, trans_rate=0.1):
    """State in the mrad operating box used throughout the tests."""
    q = np.concatenate([rng.uniform(-trans, trans, 3), rng.uniform(-angle, angle, 3)])
    qd = np.concatenate([rng.uniform(-trans_rate, trans_rate, 3), rng.uniform(-rate, rate, 3)])
    return q, qd


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
