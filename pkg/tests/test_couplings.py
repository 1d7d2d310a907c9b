import math

import numpy as np
import pytest

from couplings import (
    DIPOLAR,
    CouplingMatrix,
    CouplingModel,
    constant_anisotropy,
    coupling_matrix,
    get_anisotropy,
    median_nn_coupling,
    nn_couplings,
)
from ensemble import BallGeometry, SpinConfiguration, sample_rsa
from errors import DegenerateGeometry, InsufficientSpins


def test_pair_coupling_power_law(pair_1d):
    matrix = coupling_matrix(pair_1d, CouplingModel(6.0))
    assert matrix.values[0, 1] == pytest.approx(64.0, rel=1e-14)
    assert matrix.values[1, 0] == matrix.values[0, 1]


def test_c_alpha_scales_couplings(pair_1d):
    base = coupling_matrix(pair_1d, CouplingModel(3.0)).values
    scaled = coupling_matrix(pair_1d, CouplingModel(3.0, c_alpha=2.5)).values
    assert np.allclose(scaled, 2.5 * base, rtol=1e-15, atol=0)


def test_matrix_invariants(small_3d):
    _, matrix = small_3d
    vals = matrix.values
    assert np.array_equal(vals, vals.T)
    assert np.all(np.diag(vals) == 0.0)
    assert np.all(vals[~np.eye(matrix.n, dtype=bool)] > 0)
    with pytest.raises(ValueError):
        vals[0, 1] = 1.0


def test_permutation_equivariance(small_3d):
    config, matrix = small_3d
    order = np.array([3, 1, 7, 0, 5, 2, 6, 4])
    permuted = coupling_matrix(config.permuted(order), CouplingModel(6.0))
    assert np.allclose(permuted.values, matrix.values[np.ix_(order, order)], rtol=1e-14, atol=0)


def test_coupling_matrix_rejects_bad_input():
    with pytest.raises(ValueError, match="square"):
        CouplingMatrix(np.zeros((2, 3)))
    with pytest.raises(ValueError, match="symmetric"):
        CouplingMatrix(np.array([[0.0, 1.0], [2.0, 0.0]]))
    with pytest.raises(ValueError, match="diagonal"):
        CouplingMatrix(np.eye(2))


def test_zero_distance_raises():
    config = SpinConfiguration(BallGeometry(2), np.array([[0.2, 0.0], [0.2, 0.0]]), seed=0)
    with pytest.raises(DegenerateGeometry, match="share a position"):
        coupling_matrix(config, CouplingModel(4.0))


def test_dipolar_weight():
    model = CouplingModel(3.0, anisotropy=DIPOLAR)
    along_axis = model.pair(np.array([0.0, 0.0, 0.5]))
    in_plane = model.pair(np.array([0.5, 0.0, 0.0]))
    assert along_axis == pytest.approx(-2.0 * 8.0)
    assert in_plane == pytest.approx(8.0)
    magic = model.pair(np.array([math.sqrt(2.0 / 3.0), 0.0, math.sqrt(1.0 / 3.0)]))
    assert magic == pytest.approx(0.0, abs=1e-14)


def test_constant_anisotropy_is_a_rescaling(small_3d):
    config, matrix = small_3d
    scaled = coupling_matrix(config, CouplingModel(6.0, anisotropy=constant_anisotropy(0.5)))
    assert np.allclose(scaled.values, 0.5 * matrix.values, rtol=1e-15, atol=0)


def test_anisotropy_lookup():
    assert get_anisotropy(None) is None
    assert get_anisotropy("isotropic") is None
    assert get_anisotropy("dipolar") is DIPOLAR
    with pytest.raises(ValueError, match="unknown anisotropy"):
        get_anisotropy("quadrupolar")


def test_nearest_neighbour_couplings():
    config = SpinConfiguration(BallGeometry(1), np.array([[-0.5], [0.0], [0.4]]), seed=0)
    matrix = coupling_matrix(config, CouplingModel(1.0))
    assert np.allclose(nn_couplings(matrix), [2.0, 2.5, 2.5], rtol=1e-14, atol=0)
    assert median_nn_coupling(matrix) == pytest.approx(2.5)


def test_single_spin_has_no_nearest_neighbour():
    matrix = coupling_matrix(sample_rsa(1, BallGeometry(3), seed=0), CouplingModel(6.0))
    assert matrix.values.shape == (1, 1)
    with pytest.raises(InsufficientSpins):
        nn_couplings(matrix)


def test_invalid_model():
    with pytest.raises(ValueError):
        CouplingModel(0.0)
    with pytest.raises(ValueError):
        CouplingModel(6.0, c_alpha=-1.0)


def test_isotropic_couplings_are_rotation_invariant(small_3d):
    config, matrix = small_3d
    q, r = np.linalg.qr(np.random.default_rng(11).standard_normal((3, 3)))
    rotation = q * np.sign(np.diag(r))
    rotated = SpinConfiguration(config.geometry, config.positions @ rotation.T, config.seed)
    values = coupling_matrix(rotated, CouplingModel(6.0)).values
    assert np.allclose(values, matrix.values, rtol=1e-12, atol=0)


def test_median_nn_coupling_ignores_spin_order(small_3d):
    config, matrix = small_3d
    order = np.random.default_rng(3).permutation(config.n)
    permuted = coupling_matrix(config.permuted(order), CouplingModel(6.0))
    assert median_nn_coupling(permuted) == pytest.approx(median_nn_coupling(matrix), rel=1e-14)
    assert np.allclose(nn_couplings(permuted), nn_couplings(matrix)[order], rtol=1e-14, atol=0)
