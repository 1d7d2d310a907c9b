"""
Stretched-exponential and power-law fits, and the disorder / system-size scans
built from them.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize, stats

from couplings import CouplingModel
from dynamics import (
    MAGNETIZATION,
    PURITY,
    EnsembleTask,
    RelaxationCurve,
    TimeGrid,
    calibrate_jnn,
    ensemble_average,
    parse_observable,
)
from ensemble import (
    DEFAULT_ATTEMPTS_PER_SPIN,
    STRONG_DISORDER_X,
    BallGeometry,
    derive_seed,
    rb_for_disorder,
)
from errors import DegenerateCurve, GlassyIsingError, InsufficientData, NonPositiveValue

logger = logging.getLogger(__name__)

MIN_FIT_POINTS = 10
DEFAULT_BETA0 = 0.7
MIN_SNR = 10.0
# Points closer than this fraction of d/alpha are left out of the power-law fit.
DEVIATION_FLOOR = 0.01
# lower/upper bounds on (A, log gamma, beta)
_LOWER = (1e-12, -np.inf, 1e-6)
_UPPER = (1.1, np.inf, 1.5)


def stretched_exponential(tau, amplitude: float, gamma: float, beta: float):
    return amplitude * np.exp(-np.power(gamma * np.asarray(tau, dtype=float), beta))


@dataclass(frozen=True)
class StretchedExpFit:
    A: float
    gamma: float
    beta: float
    covariance: np.ndarray
    residual_norm: float
    converged: bool
    n_points: int = 0
    baseline: float = 0.0
    scale: float = 1.0

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def A_err(self) -> float:
        return float(self.stderr[0])

    @property
    def gamma_err(self) -> float:
        return float(self.stderr[1])

    @property
    def beta_err(self) -> float:
        return float(self.stderr[2])

    def __call__(self, tau):
        return self.baseline + self.scale * stretched_exponential(tau, self.A, self.gamma, self.beta)

    def to_dict(self) -> dict:
        return {
            "A": self.A, "A_err": self.A_err,
            "gamma": self.gamma, "gamma_err": self.gamma_err,
            "beta": self.beta, "beta_err": self.beta_err,
            "residual_norm": self.residual_norm,
            "converged": self.converged,
            "n_points": self.n_points,
        }


def _normalization(observable: str, baseline, scale) -> tuple[float, float]:
    kind, _ = parse_observable(observable)
    if kind == PURITY:
        default = (0.5, 0.5)
    elif kind in (MAGNETIZATION, "moment"):
        default = (0.0, 1.0)
    else:
        raise ValueError(f"no stretched-exponential form for '{observable}'")
    return (default[0] if baseline is None else baseline,
            default[1] if scale is None else scale)


def _initial_rate(t: np.ndarray, y: np.ndarray, amplitude: float) -> float:
    """Inverse of the time where y first falls to amplitude/e."""
    target = amplitude / math.e
    below = np.nonzero(y <= target)[0]
    if below.size == 0:
        return 1.0 / t[-1]
    k = below[0]
    if k == 0:
        return 1.0 / t[0]
    # interpolate in log time between the bracketing samples
    t0, t1 = math.log(t[k - 1]), math.log(t[k])
    y0, y1 = y[k - 1], y[k]
    frac = (y0 - target) / (y0 - y1) if y0 != y1 else 0.0
    return 1.0 / math.exp(t0 + frac * (t1 - t0))


def fit_stretched_exponential(
    curve: RelaxationCurve,
    baseline: float | None = None,
    scale: float | None = None,
    beta0: float | None = None,
    min_snr: float = MIN_SNR,
) -> StretchedExpFit:
    """Least-squares fit of A exp[-(gamma tau)^beta] to (curve - baseline)/scale.

    Purity curves are fitted as 2 (purity - 1/2). tau = 0 is left out, and so
    is every point within `min_snr` disorder standard errors of zero."""
    baseline, scale = _normalization(curve.observable, baseline, scale)
    t = curve.times
    y = (curve.values - baseline) / scale

    mask = (t > 0) & (y > 0)
    if curve.stderr is not None and np.any(curve.stderr > 0):
        mask &= y > min_snr * curve.stderr / scale
    if mask.sum() < MIN_FIT_POINTS:
        raise InsufficientData(
            f"[Fit] {int(mask.sum())} usable points, need at least {MIN_FIT_POINTS}"
        )
    tf, yf = t[mask], y[mask]
    if yf.min() > 0.9 * yf.max():
        raise DegenerateCurve("[Fit] curve does not decay inside the time grid")

    amplitude0 = float(np.clip(y[0], _LOWER[0], _UPPER[0]))
    if beta0 is None:
        meta = curve.meta
        beta0 = meta["d"] / meta["alpha"] if "d" in meta and "alpha" in meta else DEFAULT_BETA0
    gamma0 = _initial_rate(tf, yf, amplitude0)
    x0 = np.array([amplitude0, math.log(gamma0), min(beta0, _UPPER[2])])

    def residuals(theta):
        amplitude, log_gamma, beta = theta
        return stretched_exponential(tf, amplitude, math.exp(log_gamma), beta) - yf

    def jacobian(theta):
        amplitude, log_gamma, beta = theta
        scaled = math.exp(log_gamma) * tf
        power = np.power(scaled, beta)
        decay = np.exp(-power)
        return np.column_stack([
            decay,
            -amplitude * decay * beta * power,
            -amplitude * decay * power * np.log(scaled),
        ])

    result = optimize.least_squares(
        residuals, x0, jac=jacobian, bounds=(_LOWER, _UPPER), method="trf",
        x_scale="jac", ftol=1e-14, xtol=1e-14, gtol=1e-14, max_nfev=5000,
    )
    amplitude, log_gamma, beta = result.x
    gamma = math.exp(log_gamma)

    n_points = tf.size
    dof = max(n_points - 3, 1)
    sigma2 = 2.0 * result.cost / dof
    cov_log = np.linalg.pinv(result.jac.T @ result.jac) * sigma2
    to_gamma = np.diag([1.0, gamma, 1.0])
    covariance = to_gamma @ cov_log @ to_gamma

    converged = bool(result.success and result.status > 0)
    if not converged:
        logger.warning("[Fit] optimizer stopped without converging: %s", result.message)
    return StretchedExpFit(
        float(amplitude), gamma, float(beta), covariance,
        float(math.sqrt(2.0 * result.cost)), converged, n_points, baseline, scale,
    )


@dataclass(frozen=True)
class PowerLawFit:
    """y = prefactor * x^(-exponent)."""

    prefactor: float
    exponent: float
    stderr_p: float
    r_squared: float
    n_points: int

    def __call__(self, x):
        return self.prefactor * np.power(np.asarray(x, dtype=float), -self.exponent)

    def to_dict(self) -> dict:
        return {"prefactor": self.prefactor, "p": self.exponent, "p_err": self.stderr_p,
                "r_squared": self.r_squared, "n_points": self.n_points}


def fit_power_law(points) -> PowerLawFit:
    """Ordinary least squares of log y against log x."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise InsufficientData("power-law fit needs at least 3 (x, y) points")
    x, y = pts[:, 0], pts[:, 1]
    if np.any(x <= 0) or np.any(y <= 0):
        raise NonPositiveValue("power-law fit needs strictly positive x and y")
    reg = stats.linregress(np.log(x), np.log(y))
    return PowerLawFit(
        prefactor=float(math.exp(reg.intercept)),
        exponent=float(-reg.slope),
        stderr_p=float(reg.stderr),
        r_squared=float(reg.rvalue ** 2),
        n_points=int(x.size),
    )


# --- scans ---

@dataclass
class ScanResult:
    mode: str
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def ok_rows(self, observable: str | None = None) -> list:
        return [r for r in self.rows
                if r.get("status") == "ok" and (observable is None or r["observable"] == observable)]


@dataclass(frozen=True)
class ScanSettings:
    """Knobs shared by every scan point."""

    r0: float = 1.0
    c_alpha: float = 1.0
    grid_start: float = 1e-2
    grid_stop: float = 1e2
    grid_points: int = 200
    n_calibration: int = 16
    threads: int = 1
    observables: tuple = (MAGNETIZATION, PURITY)
    attempts_per_spin: int = DEFAULT_ATTEMPTS_PER_SPIN


def _fit_point(n, geometry, alpha, n_samples, seed, settings: ScanSettings) -> dict:
    """Ensemble-average one (N, geometry) point and fit every observable."""
    model = CouplingModel(alpha, settings.c_alpha)
    max_attempts = settings.attempts_per_spin * n
    jnn = calibrate_jnn(n, geometry, model, seed, settings.n_calibration, max_attempts)
    grid = TimeGrid.logspace(settings.grid_start, settings.grid_stop, settings.grid_points, unit_scale=jnn)
    task = EnsembleTask(
        n, geometry, alpha, grid, settings.observables, settings.c_alpha, max_attempts=max_attempts,
    )
    result = ensemble_average(task, n_samples, seed, threads=settings.threads)
    fits = {}
    for name, curve in result.curves.items():
        fit = fit_stretched_exponential(curve)
        fits[name] = dict(fit.to_dict(), gamma_jnn=fit.gamma / jnn)
    return {"jnn": jnn, "fits": fits}


def plateau_summary(rows: list, x_max: float = STRONG_DISORDER_X) -> dict:
    """Mean beta over the strongly disordered points, per observable."""
    summary = {}
    for name in sorted({r["observable"] for r in rows}):
        betas = [r["beta"] for r in rows
                 if r["observable"] == name and r.get("status") == "ok" and r["x"] <= x_max]
        if not betas:
            summary[name] = None
            continue
        arr = np.array(betas)
        summary[name] = {
            "beta_mean": float(arr.mean()),
            "beta_sem": float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0,
            "beta_spread": float(arr.max() - arr.min()),
            "n_points": int(arr.size),
        }
    return summary


def scan_beta_vs_disorder(
    d: int,
    alpha: float,
    n: int,
    n_samples: int,
    x_values,
    master_seed: int,
    settings: ScanSettings = ScanSettings(),
) -> ScanResult:
    scan = ScanResult("beta-vs-x", meta={
        "d": d, "alpha": alpha, "N": n, "N_s": n_samples, "master_seed": master_seed,
        "r0": settings.r0, "c_alpha": settings.c_alpha, "grid_points": settings.grid_points,
    })
    for index, x in enumerate(x_values):
        rb = rb_for_disorder(x, n, d, settings.r0)
        seed = derive_seed(master_seed, index, stream=2)
        base = {"x": float(x), "rb": rb, "N": n, "seed": seed}
        logger.info("[Scan] beta-vs-x point %d: x=%.3g rb=%.4g", index, x, rb)
        try:
            point = _fit_point(n, BallGeometry(d, settings.r0, rb), alpha, n_samples, seed, settings)
        except GlassyIsingError as exc:
            logger.warning("[Scan] x=%.3g failed: %s", x, exc)
            for name in settings.observables:
                scan.rows.append(dict(base, observable=name, status="failed", error=str(exc)))
            continue
        for name, fit in point["fits"].items():
            scan.rows.append(dict(base, observable=name, jnn=point["jnn"], status="ok", **fit))
    scan.summary = {"plateau": plateau_summary(scan.rows), "d_over_alpha": d / alpha}
    return scan


def default_rb_set(d: int, n_max: int, r0: float = 1.0, count: int = 5) -> list:
    """Exclusion radii log-spaced in x over [1e-4, 1e-2] at the largest N."""
    return [rb_for_disorder(x, n_max, d, r0) for x in np.logspace(-4, -2, count)]


def _power_law_summary(rows: list, observables) -> dict:
    fits = {}
    for name in observables:
        points = [(r["N"], r["deviation"]) for r in rows
                  if r["observable"] == name and r.get("status") == "ok"
                  and r["relative_deviation"] >= DEVIATION_FLOOR]
        try:
            fits[name] = fit_power_law(points).to_dict() if len(points) >= 3 else None
        except GlassyIsingError as exc:
            logger.warning("[Scan] power-law fit for %s failed: %s", name, exc)
            fits[name] = None
    return fits


def scan_beta_vs_n(
    d: int,
    alpha: float,
    n_values,
    n_samples: int,
    rb_set=None,
    master_seed: int = 0,
    settings: ScanSettings = ScanSettings(),
) -> ScanResult:
    """Deviation d/alpha - beta against N, beta averaged over several
    exclusion radii in the strongly disordered regime."""
    n_values = sorted(int(v) for v in n_values)
    n_max = n_values[-1]
    if rb_set is None:
        rb_set = default_rb_set(d, n_max, settings.r0)
    for rb in rb_set:
        if n_max * rb ** d / settings.r0 ** d > STRONG_DISORDER_X * (1 + 1e-9):
            raise ValueError(f"rb={rb} leaves the strongly disordered regime at N={n_max}")
    target = d / alpha
    scan = ScanResult("beta-vs-N", meta={
        "d": d, "alpha": alpha, "N_values": n_values, "N_s": n_samples,
        "rb_set": list(rb_set), "master_seed": master_seed, "r0": settings.r0,
        "c_alpha": settings.c_alpha, "grid_points": settings.grid_points,
    })

    for n_index, n in enumerate(n_values):
        betas = {name: [] for name in settings.observables}
        errors = []
        for rb_index, rb in enumerate(rb_set):
            seed = derive_seed(master_seed, n_index * len(rb_set) + rb_index, stream=3)
            try:
                point = _fit_point(n, BallGeometry(d, settings.r0, rb), alpha, n_samples, seed, settings)
            except GlassyIsingError as exc:
                logger.warning("[Scan] N=%d rb=%.4g failed: %s", n, rb, exc)
                errors.append(str(exc))
                continue
            for name, fit in point["fits"].items():
                betas[name].append(fit["beta"])
        for name in settings.observables:
            row = {"N": n, "observable": name, "betas": betas[name]}
            if not betas[name]:
                scan.rows.append(dict(row, status="failed", error="; ".join(errors)))
                continue
            arr = np.array(betas[name])
            sem = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
            deviation = target - float(arr.mean())
            scan.rows.append(dict(
                row, status="ok", beta=float(arr.mean()), beta_sem=sem,
                deviation=deviation, deviation_err=sem, relative_deviation=deviation / target,
            ))
        logger.info("[Scan] beta-vs-N: N=%d done", n)

    scan.summary = {"power_law": _power_law_summary(scan.rows, settings.observables),
                    "d_over_alpha": target}
    return scan


DEFAULT_P_TABLE = {
    3: {MAGNETIZATION: {"N": [100, 200, 400, 800, 1300], "N_s": 200},
        PURITY: {"N": [100, 200, 400, 800, 1300], "N_s": 200}},
    2: {MAGNETIZATION: {"N": [50, 100, 200, 400, 800], "N_s": 200},
        PURITY: {"N": [50, 100, 200, 400, 800], "N_s": 200}},
    1: {MAGNETIZATION: {"N": [2, 4, 6, 8, 10], "N_s": 20000},
        PURITY: {"N": [10, 25, 50, 75, 100], "N_s": 4000}},
}


def default_cases(max_alpha: int = 10) -> list:
    return [(d, alpha) for d in (1, 2, 3) for alpha in range(d, max_alpha + 1)]


def scan_p_table(
    cases,
    table: dict = None,
    master_seed: int = 0,
    settings: ScanSettings = ScanSettings(),
) -> ScanResult:
    """Finite-size exponent p for every (d, alpha) case. Observables sharing
    the same N range and sample count are evaluated on the same realizations."""
    table = DEFAULT_P_TABLE if table is None else table
    scan = ScanResult("p-table", meta={"cases": [list(c) for c in cases], "table": table,
                                       "master_seed": master_seed})
    for case_index, (d, alpha) in enumerate(cases):
        groups: dict = {}
        for name in settings.observables:
            entry = table[d][name]
            groups.setdefault((tuple(entry["N"]), entry["N_s"]), []).append(name)
        for (n_values, n_samples), names in groups.items():
            seed = derive_seed(master_seed, case_index, stream=4)
            sub = scan_beta_vs_n(
                d, alpha, n_values, n_samples, None, seed,
                replace(settings, observables=tuple(names)),
            )
            for name in names:
                fit = sub.summary["power_law"].get(name)
                row = {"d": d, "alpha": alpha, "observable": name,
                       "N_values": list(n_values), "N_s": n_samples}
                if fit is None:
                    scan.rows.append(dict(row, status="failed", error="too few points above the deviation floor"))
                else:
                    scan.rows.append(dict(row, status="ok", p=fit["p"], p_err=fit["p_err"],
                                          r_squared=fit["r_squared"]))
        logger.info("[Scan] p-table: d=%d alpha=%g done", d, alpha)
    return scan
