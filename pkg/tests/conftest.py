import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sderom.generators import GeneratorSpec, generate


@pytest.fixture(scope="session")
def ou_sets():
    """Small OU splits shared by training/prediction tests."""
    spec = GeneratorSpec(
        kind="ou",
        n_train=8,
        n_val=2,
        n_test=2,
        seed=5,
        ou_obs_dim=8,
        ou_n_samples=64,
    )
    return generate(spec)


@pytest.fixture(scope="session")
def osc_sets():
    spec = GeneratorSpec(
        kind="oscillator",
        n_train=6,
        n_val=2,
        n_test=2,
        seed=9,
        osc_obs_dim=32,
        osc_n_samples=61,
        osc_t_final=6.0,
    )
    return generate(spec)


@pytest.fixture(scope="session")
def burgers_mini():
    spec = GeneratorSpec(
        kind="burgers",
        n_train=3,
        n_val=2,
        n_test=2,
        seed=7,
        bur_grid=32,
        bur_n_samples=40,
        bur_t_final=1.0,
    )
    return generate(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
