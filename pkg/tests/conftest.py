import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_images():
    """40 random-ish 32x32 rasters in [0, 1]."""
    from gansentinel.simulator import blob_distribution, simulate_images
    return simulate_images(blob_distribution(9, size=32, noise=0.05), 40, seed=3)
