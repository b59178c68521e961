import numpy as np
import pytest
from hypothesis import HealthCheck, assume, settings
from hypothesis import strategies as st

from kdstrap.charts import build_extension
from kdstrap.radial import SpacetimeParams, lambda_interval

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.filter_too_much],
)
settings.load_profile("default")

HEADLINE = SpacetimeParams(0.02, 1.0, 0.9)
SDS = SpacetimeParams(0.06, 1.0, 0.0)


@st.composite
def subextremal(draw, ratio=(0.0, 1.1), mass=(0.5, 2.0)):
    """Triples with Lambda drawn inside the admissible interval, trimmed by 1% at each end."""
    m = draw(st.floats(*mass))
    a = m * draw(st.floats(*ratio)) * draw(st.sampled_from([-1.0, 1.0]))
    iv = lambda_interval(a, m)
    if iv.empty:
        assume(False)
    t = draw(st.floats(0.01, 0.99))
    lam = iv.lambda0 + t * (iv.lambda1 - iv.lambda0)
    assume(lam > 0)
    return SpacetimeParams(lam, m, a)


@pytest.fixture(scope="session")
def headline():
    return HEADLINE


@pytest.fixture(scope="session")
def headline_profile():
    return build_extension(HEADLINE)


@pytest.fixture(scope="session")
def sds_profile():
    return build_extension(SDS)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
