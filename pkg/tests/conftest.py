import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gaitpair.config import Config
from gaitpair.dataset_io import SyntheticGaitSpec, generate_synthetic
from gaitpair.protocol import session_code_params


@pytest.fixture(scope="session")
def cfg():
    return Config()


@pytest.fixture(scope="session")
def code_params(cfg):
    return session_code_params(cfg)


@pytest.fixture(scope="session")
def small_corpus():
    """4 subjects x 3 positions, enough cycles for a few default windows."""
    spec = SyntheticGaitSpec(n_cycles=100, n_subjects=4, rng_seed=7)
    return generate_synthetic(spec)


@pytest.fixture(scope="session")
def tiny_corpus():
    """2 subjects x 3 positions at the default spec size."""
    return generate_synthetic(SyntheticGaitSpec(rng_seed=3))
