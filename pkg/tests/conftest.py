import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings as hyp_settings

from engine import settings

hyp_settings.register_profile("default", max_examples=50, deadline=None,
                              suppress_health_check=[HealthCheck.too_slow])
hyp_settings.register_profile("thorough", max_examples=1000, deadline=None,
                              suppress_health_check=[HealthCheck.too_slow])
hyp_settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(autouse=True)
def fresh_settings():
    """Reload tolerances around every test"""
    settings.clear_cache()
    yield
    settings.clear_cache()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
