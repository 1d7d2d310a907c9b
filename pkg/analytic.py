"""
Thermodynamic-limit closed forms for the disordered power-law Ising model and
a quadrature check of the finite-cutoff configuration integral they come from.

With uniformly scattered spins at density n, the ensemble magnetization is
(1/2) exp[-c tau^(d/alpha)] where c = kappa * Gamma(eps) * sin(pi eps / 2),
eps = (alpha - d) / alpha and kappa = pi^(d/2) n (2 C)^(d/alpha) / Gamma(d/2 + 1).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

from couplings import Anisotropy
from dynamics import MAGNETIZATION, RENYI2, RelaxationCurve, TimeGrid, moment_name, parse_observable
from ensemble import BallGeometry, ball_volume
from errors import DomainError, QuadratureFailure

logger = logging.getLogger(__name__)

# k*a beyond which the cosine tail integral is taken from its asymptotic series
_ASYMPTOTIC_TAIL = 1e4


def _require_alpha_ge_d(d: float, alpha: float):
    if alpha < d:
        raise DomainError(
            f"closed forms need alpha >= d (got d={d}, alpha={alpha}); "
            "the small-distance expansion diverges below"
        )


@dataclass(frozen=True)
class ModelParameters:
    d: int
    alpha: float
    density: float = 1.0
    c_alpha: float = 1.0

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d}")
        if not self.density > 0:
            raise ValueError(f"density must be positive, got {self.density}")
        if not self.c_alpha > 0:
            raise ValueError(f"c_alpha must be positive, got {self.c_alpha}")
        _require_alpha_ge_d(self.d, self.alpha)

    @property
    def beta(self) -> float:
        return self.d / self.alpha

    @classmethod
    def from_ensemble(cls, n: int, geometry: BallGeometry, alpha: float, c_alpha: float = 1.0):
        """Parameters matching n spins spread over the ball of `geometry`."""
        return cls(geometry.d, alpha, geometry.density(n), c_alpha)


@dataclass(frozen=True)
class AnalyticPrediction:
    kappa: float
    gamma_m: float
    beta_m: float
    gamma_p: float
    beta_p: float
    chi: float = 1.0
    gamma_j: dict = field(default_factory=dict)
    exponential: bool = False

    def __post_init__(self):
        if self.beta_m != self.beta_p:
            raise ValueError("magnetization and purity stretch powers must agree")
        if not 0 < self.beta_m <= 1:
            raise ValueError(f"stretch power must lie in (0, 1], got {self.beta_m}")
        if not (self.gamma_m > 0 and self.gamma_p > 0):
            raise ValueError("rates must be positive")
        if not 0 < self.chi:
            raise ValueError(f"anisotropy factor must be positive, got {self.chi}")

    def with_anisotropy(self, rate: float) -> float:
        """Rate of the anisotropic model; chi rescales the exponent coefficient
        rate**beta, which at alpha = d is the rate itself."""
        return self.chi ** (1.0 / self.beta_m) * rate

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "gamma_m": self.gamma_m,
            "beta_m": self.beta_m,
            "gamma_p": self.gamma_p,
            "beta_p": self.beta_p,
            "chi": self.chi,
            "gamma_m_anisotropic": self.with_anisotropy(self.gamma_m),
            "gamma_p_anisotropic": self.with_anisotropy(self.gamma_p),
            "gamma_j": {str(j): rate for j, rate in self.gamma_j.items()},
            "exponential": self.exponential,
        }


def _fresnel_factor(d: float, alpha: float) -> float:
    """Gamma(eps) sin(pi eps / 2) with eps = (alpha - d)/alpha; pi/2 at eps = 0."""
    _require_alpha_ge_d(d, alpha)
    eps = (alpha - d) / alpha
    if eps == 0.0:
        return math.pi / 2
    return float(gamma_fn(eps)) * math.sin(math.pi * eps / 2)


def fresnel_asymptote(d: float, alpha: float) -> float:
    """Limit of int_0^Y sin(y^alpha) y^(alpha-d-1) dy as Y -> infinity."""
    return _fresnel_factor(d, alpha) / alpha


def fresnel_quadrature(d: float, alpha: float, rtol: float = 1e-10) -> float:
    """Same limit by direct quadrature, after t = y^alpha:
    (1/alpha) int_0^inf sin(t) t^(-d/alpha) dt."""
    _require_alpha_ge_d(d, alpha)
    beta = d / alpha
    head = _quad(lambda t: np.sinc(t / math.pi) * t ** (1.0 - beta), 0.0, 1.0, rtol)
    tail = _quad(lambda t: t ** (-beta), 1.0, math.inf, rtol, epsabs=rtol, weight="sin", wvar=1.0)
    return (head + tail) / alpha


def kappa(params: ModelParameters) -> float:
    d, alpha = params.d, params.alpha
    return (
        math.pi ** (d / 2)
        * params.density
        * (2 * params.c_alpha) ** (d / alpha)
        / float(gamma_fn(d / 2 + 1))
    )


def exponent_coefficient(params: ModelParameters) -> float:
    """c in <s_x> = exp(-c tau^beta) / 2."""
    return kappa(params) * _fresnel_factor(params.d, params.alpha)


def analytic_magnetization(params: ModelParameters, tau, chi: float = 1.0):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("times must be non-negative")
    return 0.5 * np.exp(-chi * exponent_coefficient(params) * tau ** params.beta)


def _harmonic_weights(j: int) -> list[tuple[float, int]]:
    """cos^j x = sum_i binom(j, i) / 2^j cos((j - 2i) x)."""
    return [(math.comb(j, i) / 2 ** j, abs(j - 2 * i)) for i in range(j + 1)]


def moment_coefficient(j: int, params: ModelParameters) -> float:
    """Exponent coefficient of the j-th moment: harmonics add in the exponent."""
    if j < 1:
        raise ValueError(f"moment order must be >= 1, got {j}")
    beta = params.beta
    weight = sum(w * k ** beta for w, k in _harmonic_weights(j) if k)
    return weight * exponent_coefficient(params)


def gamma_moment(j: int, params: ModelParameters) -> float:
    return moment_coefficient(j, params) ** (1.0 / params.beta)


def dephasing_plateau(j: int) -> float:
    """Weight of the zero-frequency harmonic of cos^j: the level a pure
    pair-dephasing picture would leave. The many-body average decays past it."""
    if j < 1:
        raise ValueError(f"moment order must be >= 1, got {j}")
    return math.comb(j, j // 2) / 2 ** j if j % 2 == 0 else 0.0


def analytic_moment(j: int, params: ModelParameters, tau, chi: float = 1.0):
    tau = np.asarray(tau, dtype=float)
    return np.exp(-chi * moment_coefficient(j, params) * tau ** params.beta)


def analytic_purity(params: ModelParameters, tau, chi: float = 1.0):
    return 0.5 * (1.0 + analytic_moment(2, params, tau, chi))


def renyi2_entropy(purity):
    """Second Renyi entropy S2 = -log tr(rho^2)."""
    return -np.log(purity)


def finite_size_magnetization(params: ModelParameters, n_prime: int, tau, chi: float = 1.0):
    """(1/2)[1 - c tau^beta / N']^(N'-1): cutoffs removed but N' finite."""
    if n_prime < 2:
        raise ValueError(f"need N' >= 2, got {n_prime}")
    tau = np.asarray(tau, dtype=float)
    base = 1.0 - chi * exponent_coefficient(params) * tau ** params.beta / n_prime
    return 0.5 * np.clip(base, 0.0, None) ** (n_prime - 1)


def median_nn_coupling_continuum(params: ModelParameters) -> float:
    """Coupling at the median nearest-neighbour distance of a uniform
    (Poisson) ensemble: n V_d r^d = ln 2."""
    r_med = (math.log(2) / (params.density * ball_volume(params.d, 1.0))) ** (1.0 / params.d)
    return params.c_alpha / r_med ** params.alpha


def rates(params: ModelParameters, anisotropy=None, moments=()) -> AnalyticPrediction:
    beta = params.beta
    gamma_m = exponent_coefficient(params) ** (1.0 / beta)
    chi = anisotropy_chi(anisotropy, params.d, params.alpha) if anisotropy is not None else 1.0
    return AnalyticPrediction(
        kappa=kappa(params),
        gamma_m=gamma_m,
        beta_m=beta,
        gamma_p=2.0 ** (1.0 - params.alpha / params.d) * gamma_m,
        beta_p=beta,
        chi=chi,
        gamma_j={int(j): gamma_moment(int(j), params) for j in moments},
        exponential=params.alpha == params.d,
    )


# --- finite-cutoff quadrature ---

def _quad(func, a, b, rtol, epsabs=0.0, **kwargs) -> float:
    """scipy quad with integration warnings turned into QuadratureFailure.
    Fourier tails (weight on an infinite range) only honour `epsabs`."""
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, _ = integrate.quad(func, a, b, epsabs=epsabs, epsrel=rtol, limit=500, **kwargs)
        except integrate.IntegrationWarning as exc:
            raise QuadratureFailure(f"[Quad] tolerance {rtol:g} not reached on [{a}, {b}]: {exc}") from exc
    return value


@dataclass(frozen=True)
class CutoffIntegralConfig:
    rb: float
    r0: float
    n_prime: int
    rtol: float = 1e-10

    def __post_init__(self):
        if not 0 < self.rb < self.r0:
            raise ValueError(f"need 0 < rb < r0, got rb={self.rb}, r0={self.r0}")
        if self.n_prime < 2:
            raise ValueError(f"need N' >= 2, got {self.n_prime}")

    def density(self, d: int) -> float:
        return self.n_prime / ball_volume(d, self.r0)

    @classmethod
    def for_density(cls, params: ModelParameters, n_prime: int, rb_ratio: float, rtol: float = 1e-10):
        """Cutoffs holding N' spins at the density of `params`, with rb = rb_ratio * r0."""
        r0 = (n_prime / (params.density * ball_volume(params.d, 1.0))) ** (1.0 / params.d)
        return cls(rb_ratio * r0, r0, n_prime, rtol)

    @classmethod
    def for_packing(cls, params: ModelParameters, n_prime: int, x: float, rtol: float = 1e-10):
        """Cutoffs holding N' spins at the density of `params`, with rb set by
        the packing ratio x = N' (rb/r0)^d. The inner cutoff removes a deficit
        of about x from the exponent, whatever d is."""
        if not x > 0:
            raise ValueError(f"packing ratio must be positive, got {x}")
        return cls.for_density(params, n_prime, (x / n_prime) ** (1.0 / params.d), rtol)


def _cosine_tail(a: float, p: float, k: float, rtol: float) -> float:
    """int_a^inf u^(-p) cos(k u) du."""
    if k * a > _ASYMPTOTIC_TAIL:
        return (
            -math.sin(k * a) * a ** -p / k
            + p * math.cos(k * a) * a ** (-p - 1) / k ** 2
        )
    return _quad(
        lambda u: u ** -p, a, math.inf, rtol, epsabs=rtol * a ** -p / k, weight="cos", wvar=k
    )


def _shell_deficit(d: int, alpha: float, config: CutoffIntegralConfig, k: float) -> float:
    """1 - d/(r0^d - rb^d) int_rb^r0 r^(d-1) cos(k / r^alpha) dr.

    With u = r^-alpha the integrand is a constant-frequency oscillation under
    a power-law envelope; below u = pi/k it is integrated in log u, above it
    the oscillatory part is a Fourier tail."""
    if k == 0.0:
        return 0.0
    beta = d / alpha
    u0, ub = config.r0 ** -alpha, config.rb ** -alpha
    uc = min(max(u0, math.pi / k), ub)
    rtol = config.rtol

    total = 0.0
    if uc > u0:
        total += _quad(
            lambda s: math.exp(-beta * s) * 2.0 * math.sin(0.5 * k * math.exp(s)) ** 2,
            math.log(u0), math.log(uc), rtol,
        )
    if ub > uc:
        total += (uc ** -beta - ub ** -beta) / beta
        total -= _cosine_tail(uc, beta + 1.0, k, rtol) - _cosine_tail(ub, beta + 1.0, k, rtol)
    return d / (alpha * (config.r0 ** d - config.rb ** d)) * total


def cutoff_moment(j: int, params: ModelParameters, config: CutoffIntegralConfig, tau: float) -> float:
    """Finite-cutoff ensemble value of <sigma_x>^j, raised to the power N' - 1."""
    freq = 2.0 * params.c_alpha * tau
    deficit = sum(
        w * _shell_deficit(params.d, params.alpha, config, h * freq)
        for w, h in _harmonic_weights(j) if h
    )
    base = 1.0 - deficit
    if base > 0.0:
        return math.exp((config.n_prime - 1) * math.log1p(-deficit))
    # shell average of the cosine went negative; odd powers keep the sign
    return base ** (config.n_prime - 1)


def verify_thermodynamic_limit(
    params: ModelParameters,
    config: CutoffIntegralConfig,
    grid: TimeGrid,
    j: int = 1,
) -> RelaxationCurve:
    """Finite-cutoff magnetization (j = 1) or j-th moment on `grid`."""
    if not math.isclose(config.density(params.d), params.density, rel_tol=1e-9):
        raise ValueError(
            f"cutoff config holds density {config.density(params.d):.6g}, "
            f"parameters say {params.density:.6g}"
        )
    values = np.array([cutoff_moment(j, params, config, tau) for tau in grid.values])
    name = MAGNETIZATION if j == 1 else moment_name(j)
    if j == 1:
        values = 0.5 * values
    logger.debug("[Quad] evaluated %d cutoff points for d=%d alpha=%g", len(grid), params.d, params.alpha)
    meta = {
        "d": params.d, "alpha": params.alpha, "density": params.density,
        "rb": config.rb, "r0": config.r0, "n_prime": config.n_prime, "method": "cutoff_quadrature",
    }
    return RelaxationCurve(grid, values, name, meta=meta)


def analytic_curve(
    params: ModelParameters,
    grid: TimeGrid,
    observable: str = MAGNETIZATION,
    chi: float = 1.0,
    n_prime: int | None = None,
) -> RelaxationCurve:
    """Closed-form curve on `grid`. With `n_prime` the magnetization keeps the
    finite-N' form instead of its exponential limit."""
    kind, j = parse_observable(observable)
    if n_prime is not None and kind != MAGNETIZATION:
        raise ValueError(f"finite-N' form exists for magnetization only, not '{observable}'")
    method = "closed_form"
    if kind == MAGNETIZATION:
        if n_prime is None:
            values = analytic_magnetization(params, grid.values, chi)
        else:
            values = finite_size_magnetization(params, n_prime, grid.values, chi)
            method = "finite_size"
    elif kind == "moment":
        values = analytic_moment(j, params, grid.values, chi)
    else:
        values = analytic_purity(params, grid.values, chi)
        if kind == RENYI2:
            values = renyi2_entropy(values)
    meta = {"d": params.d, "alpha": params.alpha, "density": params.density,
            "c_alpha": params.c_alpha, "chi": chi, "method": method}
    if n_prime is not None:
        meta["n_prime"] = n_prime
    return RelaxationCurve(grid, values, observable, meta=meta)


def _direction_average(weight: Callable[[np.ndarray], np.ndarray], d: int, power: float, rtol: float) -> float:
    if d == 1:
        return 0.5 * float(
            abs(weight(np.array([1.0]))) ** power + abs(weight(np.array([-1.0]))) ** power
        )
    if d == 2:
        return _quad(
            lambda phi: abs(float(weight(np.array([math.cos(phi), math.sin(phi)])))) ** power,
            0.0, 2 * math.pi, rtol,
        ) / (2 * math.pi)
    if d == 3:
        def ring(z):
            s = math.sqrt(max(0.0, 1.0 - z * z))
            return _quad(
                lambda phi: abs(float(weight(np.array([s * math.cos(phi), s * math.sin(phi), z])))) ** power,
                0.0, 2 * math.pi, rtol,
            )
        return _quad(ring, -1.0, 1.0, rtol) / (4 * math.pi)
    raise ValueError(f"angular average implemented for d <= 3, got d={d}")


def anisotropy_chi(f, d: int, alpha: float, rtol: float = 1e-10) -> float:
    """Angular mean of |f|^(d/alpha); f is an Anisotropy or a callable on unit vectors."""
    _require_alpha_ge_d(d, alpha)
    if f is None:
        return 1.0
    power = d / alpha
    if isinstance(f, Anisotropy) and f.polar is not None and d == 3:
        polar = f.polar
        return 0.5 * _quad(
            lambda z: abs(float(polar(z))) ** power, -1.0, 1.0, rtol,
            points=f.polar_breakpoints or None,
        )
    weight = f.weight if isinstance(f, Anisotropy) else f
    return _direction_average(weight, d, power, rtol)
