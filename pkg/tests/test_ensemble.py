import math

import numpy as np
import pytest
from scipy import stats

from ensemble import (
    BallGeometry,
    DisorderParameter,
    SpinConfiguration,
    ball_volume,
    check_min_distance,
    derive_seed,
    disorder_parameter,
    min_pairwise_distance,
    pairwise_displacements,
    rb_for_disorder,
    sample_rsa,
    sample_uniform_ball,
)
from errors import DegenerateGeometry, PackingFailure


@pytest.mark.parametrize("d,r,expected", [
    (1, 1.0, 2.0),
    (2, 2.0, 4 * math.pi),
    (3, 1.0, 4 * math.pi / 3),
])
def test_ball_volume(d, r, expected):
    assert ball_volume(d, r) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("kwargs", [
    {"d": 0},
    {"d": 3, "r0": 0.0},
    {"d": 3, "r0": 1.0, "rb": 2.0},
    {"d": 3, "r0": 1.0, "rb": -0.1},
])
def test_invalid_geometry(kwargs):
    with pytest.raises(ValueError):
        BallGeometry(**kwargs)


def test_same_seed_same_configuration():
    geometry = BallGeometry(3, 1.0, rb_for_disorder(0.01, 200, 3))
    a = sample_rsa(200, geometry, seed=1234)
    b = sample_rsa(200, geometry, seed=1234)
    c = sample_rsa(200, geometry, seed=1235)
    assert np.array_equal(a.positions, b.positions)
    assert not np.array_equal(a.positions, c.positions)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_rsa_respects_ball_and_exclusion(d):
    n = 150
    geometry = BallGeometry(d, 1.0, rb_for_disorder(0.2, n, d))
    config = sample_rsa(n, geometry, seed=d)
    assert config.positions.shape == (n, d)
    assert np.all(np.linalg.norm(config.positions, axis=1) < 1.0)
    assert min_pairwise_distance(config.positions) >= geometry.rb * (1 - 1e-12)
    assert disorder_parameter(config).x == pytest.approx(0.2, rel=1e-12)


def test_zero_exclusion_never_rejects():
    config = sample_rsa(500, BallGeometry(2, 1.0, 0.0), seed=3)
    assert config.rejections == 0


def test_cell_index_matches_brute_force():
    n = 400
    geometry = BallGeometry(2, 1.0, rb_for_disorder(0.3, n, 2))
    brute = sample_rsa(n, geometry, seed=11, use_grid=False)
    grid = sample_rsa(n, geometry, seed=11, use_grid=True)
    assert np.array_equal(brute.positions, grid.positions)
    assert brute.rejections == grid.rejections


def test_overfull_ball_raises_packing_failure():
    # a segment of length 2 cannot hold 50 points spaced 0.5 apart
    with pytest.raises(PackingFailure):
        sample_rsa(50, BallGeometry(1, 1.0, 0.5), seed=0, max_attempts=1000)


def test_uniform_ball_radial_distribution():
    rng = np.random.default_rng(5)
    radii = np.array([np.linalg.norm(sample_uniform_ball(3, 1.0, rng)) for _ in range(20000)])
    # E[r] = d/(d+1) r0 for a uniform d-ball
    assert radii.mean() == pytest.approx(0.75, abs=0.01)
    assert radii.max() < 1.0


def test_derive_seed_streams_are_independent():
    assert derive_seed(42, 0) == derive_seed(42, 0)
    assert derive_seed(42, 0) != derive_seed(42, 1)
    assert derive_seed(42, 0, stream=0) != derive_seed(42, 0, stream=1)
    assert derive_seed(42, 0) != derive_seed(43, 0)


def test_rb_for_disorder_inverts_packing_ratio():
    rb = rb_for_disorder(0.005, 1300, 3, r0=2.0)
    assert 1300 * rb ** 3 / 2.0 ** 3 == pytest.approx(0.005, rel=1e-12)
    assert rb_for_disorder(0.0, 100, 2) == 0.0
    with pytest.raises(ValueError):
        rb_for_disorder(-1e-3, 100, 2)


def test_disorder_parameter_regime():
    assert DisorderParameter(0.005).strongly_disordered
    assert not DisorderParameter(0.3).strongly_disordered
    with pytest.raises(ValueError):
        DisorderParameter(-0.1)


def test_configuration_validation():
    geometry = BallGeometry(2, 1.0, 0.2)
    with pytest.raises(ValueError, match="inside"):
        SpinConfiguration(geometry, np.array([[0.0, 0.0], [1.0, 0.0]]), seed=0)
    with pytest.raises(ValueError, match="exclusion"):
        SpinConfiguration(geometry, np.array([[0.0, 0.0], [0.1, 0.0]]), seed=0)
    with pytest.raises(ValueError, match="shape"):
        SpinConfiguration(geometry, np.zeros((3, 3)), seed=0)


def test_positions_are_read_only():
    config = sample_rsa(10, BallGeometry(3), seed=0)
    with pytest.raises(ValueError):
        config.positions[0, 0] = 0.5


def test_coincident_spins_are_degenerate():
    config = SpinConfiguration(BallGeometry(2), np.array([[0.1, 0.1], [0.1, 0.1]]), seed=0)
    with pytest.raises(DegenerateGeometry):
        check_min_distance(config)


def test_scaled_and_permuted():
    config = sample_rsa(20, BallGeometry(3, 1.0, 0.05), seed=2)
    big = config.scaled(3.0)
    assert big.geometry.r0 == 3.0 and big.geometry.rb == pytest.approx(0.15)
    assert np.allclose(big.positions, 3.0 * config.positions, rtol=0, atol=1e-15)
    order = np.arange(20)[::-1]
    assert np.array_equal(config.permuted(order).positions, config.positions[::-1])


def test_pairwise_displacements_antisymmetric():
    pos = sample_rsa(6, BallGeometry(2), seed=1).positions
    disp = pairwise_displacements(pos)
    assert disp.shape == (6, 6, 2)
    assert np.array_equal(disp, -disp.transpose(1, 0, 2))


@pytest.mark.parametrize("d", [1, 2, 3])
def test_uniform_ball_radius_passes_ks(d):
    rng = np.random.default_rng(100 + d)
    radii = np.array([np.linalg.norm(sample_uniform_ball(d, 1.0, rng)) for _ in range(100_000)])
    result = stats.kstest(radii, lambda r: np.clip(r, 0.0, 1.0) ** d)
    assert result.pvalue > 1e-3


@pytest.mark.parametrize("d", [1, 2, 3])
def test_zero_exclusion_matches_independent_uniform_draws(d):
    config = sample_rsa(100, BallGeometry(d, 1.0, 0.0), seed=21)
    rng = np.random.default_rng(21)
    expected = np.array([sample_uniform_ball(d, 1.0, rng) for _ in range(100)])
    assert np.array_equal(config.positions, expected)
