"""
Shared fixtures
"""

import numpy as np
import pytest

from src.config import ENV_KEYS
from src.core.holder import bump_kernel
from src.core.measure import DiscreteMeasure
from src.gwn.frontier import FrontierSpec


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    """Keep BIASMAD_* variables from the developer's shell out of the tests"""
    for key in ENV_KEYS:
        monkeypatch.delenv(key, raising=False)
    # load_dotenv must not find a stray .env either
    monkeypatch.setattr("src.config.load_dotenv", lambda *args, **kwargs: False)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def bump():
    return bump_kernel(1.0)


@pytest.fixture(scope="session")
def frontier_spec(bump):
    return FrontierSpec(beta=1.0, R=1.0, C=1.0, kernel=bump, x0=0.5)


@pytest.fixture
def literal_counterexample():
    """P = (0.7, 0.3), Q = (0.6, 0.4)"""
    return DiscreteMeasure.from_probs([0.7, 0.3]), DiscreteMeasure.from_probs([0.6, 0.4])
