import math

import numpy as np
import pytest

from couplings import CouplingMatrix, CouplingModel, coupling_matrix, median_nn_coupling
from dynamics import (
    MAGNETIZATION,
    PURITY,
    RENYI2,
    EnsembleTask,
    RelaxationCurve,
    TimeGrid,
    calibrate_jnn,
    default_grid,
    ensemble_average,
    exact_oracle,
    magnetization_curve,
    moment_curve,
    moment_name,
    parse_observable,
    purity_curve,
    renyi2_curve,
    spin_histogram,
    spin_magnetization,
    spin_magnetizations,
)
from ensemble import BallGeometry, rb_for_disorder, sample_rsa
from errors import TooLarge


def test_time_grid_units():
    grid = TimeGrid.logspace(0.01, 100.0, 5, unit_scale=4.0)
    assert np.allclose(grid.scaled, [0.01, 0.1, 1.0, 10.0, 100.0], rtol=1e-14, atol=0)
    assert np.allclose(grid.values, grid.scaled / 4.0, rtol=1e-15, atol=0)
    assert len(default_grid(2.0)) == 200


@pytest.mark.parametrize("values", [[], [0.1, 0.1], [0.2, 0.1], [-1.0, 1.0]])
def test_time_grid_validation(values):
    with pytest.raises(ValueError):
        TimeGrid(np.array(values))


def test_observable_names():
    assert parse_observable(MAGNETIZATION) == (MAGNETIZATION, 1)
    assert parse_observable(PURITY) == (PURITY, 2)
    assert parse_observable(moment_name(4)) == ("moment", 4)
    for bad in ("moment0", "momentx", "entropy"):
        with pytest.raises(ValueError):
            parse_observable(bad)


def test_curve_range_is_checked():
    grid = TimeGrid(np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        RelaxationCurve(grid, np.array([0.5, 0.6]), MAGNETIZATION)
    with pytest.raises(ValueError):
        RelaxationCurve(grid, np.array([1.0, 0.4]), PURITY)
    with pytest.raises(ValueError):
        RelaxationCurve(grid, np.array([0.5]), MAGNETIZATION)


def test_two_spins_oscillate(pair_1d):
    matrix = coupling_matrix(pair_1d, CouplingModel(6.0))
    grid = TimeGrid(np.linspace(0.0, 0.1, 41))
    curve = magnetization_curve(matrix, grid)
    assert np.allclose(curve.values, 0.5 * np.cos(128.0 * grid.values), rtol=0, atol=1e-15)
    assert spin_magnetization(0, matrix, 0.01) == pytest.approx(math.cos(1.28), abs=1e-15)


def test_single_spin_never_decays():
    matrix = coupling_matrix(sample_rsa(1, BallGeometry(3), seed=0), CouplingModel(6.0))
    grid = TimeGrid(np.array([0.0, 1.0, 10.0]))
    assert np.all(magnetization_curve(matrix, grid).values == 0.5)
    assert np.all(purity_curve(matrix, grid).values == 1.0)


def test_initial_values(small_3d):
    _, matrix = small_3d
    grid = TimeGrid(np.array([0.0, 0.1]))
    assert magnetization_curve(matrix, grid).values[0] == 0.5
    assert purity_curve(matrix, grid).values[0] == 1.0
    assert renyi2_curve(matrix, grid).values[0] == 0.0
    assert moment_curve(3, matrix, grid).values[0] == 1.0


def test_moment_identities(small_3d):
    _, matrix = small_3d
    grid = TimeGrid.logspace(0.01, 100.0, 60, unit_scale=median_nn_coupling(matrix))
    mag = magnetization_curve(matrix, grid).values
    pur = purity_curve(matrix, grid).values
    np.testing.assert_allclose(moment_curve(1, matrix, grid).values, 2 * mag, rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(pur, 0.5 * (1 + moment_curve(2, matrix, grid).values), rtol=1e-13)
    np.testing.assert_allclose(renyi2_curve(matrix, grid).values, -np.log(pur), rtol=1e-12, atol=1e-15)
    # Jensen: the spin average of squares bounds the square of the average
    assert np.all(pur >= 0.5 * (1 + (2 * mag) ** 2) - 1e-15)


def test_scale_invariance(small_3d):
    config, matrix = small_3d
    alpha, lam = 6.0, 3.0
    tau = np.logspace(-3, 0, 30) / median_nn_coupling(matrix)
    big = coupling_matrix(config.scaled(lam), CouplingModel(alpha))
    np.testing.assert_allclose(
        spin_magnetizations(big, lam ** alpha * tau),
        spin_magnetizations(matrix, tau),
        rtol=0, atol=1e-12,
    )


def test_histogram_counts_every_spin(small_3d):
    _, matrix = small_3d
    hist = spin_histogram(matrix, 1.0 / median_nn_coupling(matrix), bins=10)
    assert hist.counts.sum() == matrix.n == hist.n_spins
    assert hist.bin_edges[0] == -1.0 and hist.bin_edges[-1] == 1.0


_ORACLE_N = (2, 6, 10, 12)
_ORACLE_D = (1, 2, 3)
_ORACLE_ALPHA = (3.0, 6.0)


@pytest.mark.parametrize("case", range(20))
def test_product_formula_matches_state_vector(case):
    n = _ORACLE_N[case % 4]
    d = _ORACLE_D[case % 3]
    alpha = _ORACLE_ALPHA[case % 2]
    config = sample_rsa(n, BallGeometry(d, 1.0, rb_for_disorder(0.5, n, d)), seed=100 + case)
    matrix = coupling_matrix(config, CouplingModel(alpha))
    grid = TimeGrid.logspace(0.01, 10.0, 50, unit_scale=median_nn_coupling(matrix))
    mag, pur = exact_oracle(matrix, grid)
    np.testing.assert_allclose(magnetization_curve(matrix, grid).values, mag.values, rtol=0, atol=1e-10)
    np.testing.assert_allclose(purity_curve(matrix, grid).values, pur.values, rtol=0, atol=1e-10)


def test_oracle_refuses_large_systems():
    grid = TimeGrid(np.array([0.0, 1.0]))
    with pytest.raises(TooLarge):
        exact_oracle(CouplingMatrix(np.zeros((25, 25))), grid)


def _task(n=30, d=3, x=0.005, observables=(MAGNETIZATION, PURITY)):
    geometry = BallGeometry(d, 1.0, rb_for_disorder(x, n, d))
    grid = TimeGrid.logspace(0.01, 100.0, 40)
    return EnsembleTask(n, geometry, 6.0, grid, observables)


def test_ensemble_is_reproducible():
    task = _task()
    a = ensemble_average(task, 12, master_seed=9)
    b = ensemble_average(task, 12, master_seed=9)
    c = ensemble_average(task, 12, master_seed=10)
    assert a.seeds == b.seeds
    assert np.array_equal(a.curve.values, b.curve.values)
    assert not np.array_equal(a.curve.values, c.curve.values)


def test_thread_count_does_not_change_output():
    task = _task(observables=(MAGNETIZATION, PURITY, RENYI2, moment_name(4)))
    serial = ensemble_average(task, 16, master_seed=1, threads=1)
    pooled = ensemble_average(task, 16, master_seed=1, threads=4)
    for name in task.observables:
        assert np.array_equal(serial.curves[name].values, pooled.curves[name].values)
        assert np.array_equal(serial.curves[name].stderr, pooled.curves[name].stderr)


def test_ensemble_metadata_and_errors():
    task = _task()
    result = ensemble_average(task, 5, master_seed=3, keep_realizations=True)
    curve = result.curves[MAGNETIZATION]
    assert curve.meta["N"] == 30 and curve.meta["N_s"] == 5
    assert curve.meta["x"] == pytest.approx(0.005)
    assert result.realizations[PURITY].shape == (5, 40)
    assert np.all(curve.stderr >= 0)
    assert np.all(result.jnn > 0)

    single = ensemble_average(task, 1, master_seed=3)
    assert np.all(single.curve.stderr == 0.0)
    with pytest.raises(ValueError):
        ensemble_average(task, 0, master_seed=3)


def test_ensemble_mean_of_realizations():
    task = _task(n=10)
    result = ensemble_average(task, 4, master_seed=5, keep_realizations=True)
    stack = result.realizations[MAGNETIZATION]
    np.testing.assert_allclose(result.curve.values, stack.mean(axis=0), rtol=1e-14, atol=1e-16)


def test_calibration_stream_is_separate():
    n, geometry, model = 40, BallGeometry(3, 1.0, rb_for_disorder(0.005, 40, 3)), CouplingModel(6.0)
    jnn = calibrate_jnn(n, geometry, model, master_seed=2, n_calibration=8)
    assert jnn == calibrate_jnn(n, geometry, model, master_seed=2, n_calibration=8)
    assert jnn > 0
    # mean nearest-neighbour distance ~ (4 pi n / 3)^(-1/3) sets the scale
    assert 10 < jnn < 1e5
