import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sgmeta.fields import FourierField

settings.register_profile("default", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE_RESULTS: dict = {}


def random_field(rng, N, decay=1.0, scale=0.5):
    """Smooth-ish random field with coefficients decaying like |n|^-decay-1."""
    n = np.arange(-N, N + 1)
    amp = scale / (1.0 + np.abs(n)) ** (decay + 1.0)
    return FourierField(N, amp * rng.standard_normal(2 * N + 1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[k]
        tr.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
