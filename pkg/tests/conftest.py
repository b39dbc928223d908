import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

from coopsched.belief import JointBelief  # noqa: E402


def gram(rng, n, scale=1.0):
    g = rng.standard_normal((n, n))
    m = scale * (g @ g.T) + 1e-6 * np.eye(n)
    return (m + m.T) / 2.0


def random_belief(rng, n, scale=0.05, extent=6.0):
    est = rng.uniform(0.0, extent, size=(n, 2))
    return JointBelief(n, est, gram(rng, 2 * n, scale))


seeds = st.integers(min_value=0, max_value=2**32 - 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def fixture_dataset(tmp_path_factory):
    from coopsched.utias import synthesize_dataset

    path = tmp_path_factory.mktemp("utias_fixture")
    synthesize_dataset(path, seed=7)
    return path
