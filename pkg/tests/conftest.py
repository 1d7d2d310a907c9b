import numpy as np
import pytest

from couplings import CouplingModel, coupling_matrix
from ensemble import BallGeometry, SpinConfiguration, rb_for_disorder, sample_rsa


@pytest.fixture
def db_path(tmp_path):
    return str(tmp_path / "runs.db")


@pytest.fixture
def pair_1d():
    """Two spins at distance 1/2 on a line."""
    geometry = BallGeometry(1, 1.0, 0.0)
    return SpinConfiguration(geometry, np.array([[-0.25], [0.25]]), seed=0)


@pytest.fixture
def small_3d():
    geometry = BallGeometry(3, 1.0, rb_for_disorder(0.3, 8, 3))
    config = sample_rsa(8, geometry, seed=7)
    return config, coupling_matrix(config, CouplingModel(6.0))
