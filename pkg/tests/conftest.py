import numpy as np
import pytest

from rbmm.core import ParticleEnsemble


@pytest.fixture
def frozen_state():
    """Eight particles in the unit square, away from each other."""
    rng = np.random.default_rng(12345)
    return ParticleEnsemble(rng.uniform(-1.0, 1.0, size=(8, 2)))


def random_state(n, d=2, seed=0, spread=1.0):
    rng = np.random.default_rng(seed)
    return ParticleEnsemble(rng.uniform(-spread, spread, size=(n, d)))
