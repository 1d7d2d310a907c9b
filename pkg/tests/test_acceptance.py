"""Desk-scale checks of the stretched-exponential scaling laws. Minutes to tens
of minutes each; run with `pytest -m slow`."""

import numpy as np
import pytest

from analytic import ModelParameters, analytic_curve
from couplings import CouplingModel
from dynamics import MAGNETIZATION, PURITY, EnsembleTask, TimeGrid, calibrate_jnn, ensemble_average
from ensemble import BallGeometry, rb_for_disorder
from fitting import ScanSettings, fit_stretched_exponential, scan_beta_vs_disorder, scan_beta_vs_n

pytestmark = pytest.mark.slow


def _ensemble(d, alpha, n, n_samples, x=0.005, seed=42):
    geometry = BallGeometry(d, 1.0, rb_for_disorder(x, n, d))
    jnn = calibrate_jnn(n, geometry, CouplingModel(alpha), seed)
    grid = TimeGrid.logspace(0.01, 100.0, 200, unit_scale=jnn)
    task = EnsembleTask(n, geometry, alpha, grid, (MAGNETIZATION, PURITY))
    return ensemble_average(task, n_samples, seed, threads=4), geometry


@pytest.fixture(scope="module")
def ensemble_400():
    result, _ = _ensemble(3, 6.0, 400, 200)
    return {name: fit_stretched_exponential(curve) for name, curve in result.curves.items()}


def test_stretch_power_near_d_over_alpha(ensemble_400):
    assert ensemble_400[MAGNETIZATION].beta == pytest.approx(0.5, abs=0.05)
    assert ensemble_400[PURITY].beta == pytest.approx(0.5, abs=0.05)


def test_purity_decays_at_half_the_rate(ensemble_400):
    ratio = ensemble_400[PURITY].gamma / ensemble_400[MAGNETIZATION].gamma
    assert ratio == pytest.approx(0.5, rel=0.15)


def test_large_ensemble_follows_closed_form():
    result, geometry = _ensemble(3, 6.0, 1300, 200)
    curve = result.curves[MAGNETIZATION]
    params = ModelParameters.from_ensemble(1300, geometry, 6.0)
    closed = analytic_curve(params, curve.grid, MAGNETIZATION)
    window = (curve.grid.scaled >= 0.1) & (curve.grid.scaled <= 10.0)
    assert np.max(np.abs(curve.values - closed.values)[window]) < 0.02 * 0.5


def test_alpha_equal_d_decays_exponentially():
    result, _ = _ensemble(3, 3.0, 400, 200)
    assert fit_stretched_exponential(result.curves[MAGNETIZATION]).beta == pytest.approx(1.0, abs=0.07)


def test_beta_flat_in_strong_disorder():
    scan = scan_beta_vs_disorder(
        3, 6.0, 100, 200, np.logspace(-4, -2, 5), master_seed=42, settings=ScanSettings(threads=4),
    )
    plateau = scan.summary["plateau"][MAGNETIZATION]
    assert plateau["n_points"] == 5
    assert plateau["beta_spread"] < 0.03


def test_deviation_decays_as_power_law():
    scan = scan_beta_vs_n(
        3, 6.0, [100, 200, 400, 800, 1300], 200, master_seed=42,
        settings=ScanSettings(threads=4, observables=(MAGNETIZATION,)),
    )
    deviations = [r["deviation"] for r in scan.ok_rows(MAGNETIZATION)]
    assert len(deviations) == 5
    assert all(dev > 0 for dev in deviations)
    assert all(a > b for a, b in zip(deviations, deviations[1:]))
    power_law = scan.summary["power_law"][MAGNETIZATION]
    assert power_law is not None and power_law["r_squared"] >= 0.9
