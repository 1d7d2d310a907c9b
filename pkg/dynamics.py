"""
Exact Emch-Radin dynamics of Ising spins prepared in |+>^N.

Every single-spin expectation is a product of cosines,
<sigma_x^i(tau)> = prod_k cos(2 J_ik tau), so magnetization, purity and all
higher moments follow from one (N, T) table of per-spin values. A brute-force
state-vector evolution is kept next to it as an oracle for small N.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from couplings import Anisotropy, CouplingMatrix, CouplingModel, coupling_matrix, nn_couplings
from ensemble import BallGeometry, derive_seed, sample_rsa
from errors import TooLarge

logger = logging.getLogger(__name__)

MAX_ORACLE_SPINS = 24
# Upper bound on the (times, N, N) cosine block evaluated at once.
_CHUNK_ELEMENTS = 1 << 22
_RANGE_TOL = 1e-12

MAGNETIZATION = "magnetization"
PURITY = "purity"
RENYI2 = "renyi2"


def moment_name(j: int) -> str:
    return f"moment{j}"


def parse_observable(name: str) -> tuple[str, int]:
    """'magnetization' | 'purity' | 'renyi2' | 'moment<j>' -> (kind, j)."""
    if name in (MAGNETIZATION, PURITY, RENYI2):
        return name, {MAGNETIZATION: 1, PURITY: 2, RENYI2: 2}[name]
    if name.startswith("moment"):
        try:
            j = int(name[len("moment"):])
        except ValueError:
            j = 0
        if j >= 1:
            return "moment", j
    raise ValueError(f"unknown observable '{name}'")


@dataclass(frozen=True)
class TimeGrid:
    """Physical times tau (hbar = 1). `unit_scale` is the J_NN the grid was
    built from, so `scaled` gives J_NN * tau."""

    values: np.ndarray
    unit_scale: float | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).ravel()
        if vals.size < 1:
            raise ValueError("time grid is empty")
        if np.any(vals < 0):
            raise ValueError("times must be non-negative")
        if np.any(np.diff(vals) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.unit_scale is not None and not self.unit_scale > 0:
            raise ValueError(f"unit scale must be positive, got {self.unit_scale}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def logspace(cls, start: float, stop: float, num: int, unit_scale: float | None = None):
        """`num` log-spaced points between start and stop, given in J_NN*tau
        units when unit_scale is set."""
        scaled = np.logspace(math.log10(start), math.log10(stop), num)
        if unit_scale is None:
            return cls(scaled)
        return cls(scaled / unit_scale, unit_scale)

    @property
    def scaled(self) -> np.ndarray:
        if self.unit_scale is None:
            return self.values
        return self.values * self.unit_scale

    def __len__(self):
        return self.values.size


def default_grid(jnn: float, num: int = 200) -> TimeGrid:
    return TimeGrid.logspace(1e-2, 1e2, num, unit_scale=jnn)


_RANGES = {
    MAGNETIZATION: (-0.5, 0.5),
    PURITY: (0.5, 1.0),
    RENYI2: (0.0, math.log(2)),
}


@dataclass(frozen=True)
class RelaxationCurve:
    grid: TimeGrid
    values: np.ndarray
    observable: str
    stderr: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).ravel()
        if vals.size != len(self.grid):
            raise ValueError(f"{vals.size} values for a grid of {len(self.grid)} times")
        parse_observable(self.observable)
        lo, hi = _RANGES.get(self.observable, (-1.0, 1.0))
        if np.any(vals < lo - _RANGE_TOL) or np.any(vals > hi + _RANGE_TOL):
            raise ValueError(f"{self.observable} values leave [{lo}, {hi}]")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.stderr is not None:
            err = np.array(self.stderr, dtype=float).ravel()
            err.setflags(write=False)
            object.__setattr__(self, "stderr", err)

    @property
    def times(self) -> np.ndarray:
        return self.grid.values


@dataclass(frozen=True)
class SpinHistogram:
    time: float
    bin_edges: np.ndarray
    counts: np.ndarray
    n_spins: int


# --- single configuration ---

def spin_magnetizations(matrix: CouplingMatrix, times) -> np.ndarray:
    """(N, T) table of <sigma_x^i(tau)>."""
    coupling = matrix.values
    n = matrix.n
    t = np.atleast_1d(np.asarray(times, dtype=float))
    out = np.empty((n, t.size))
    chunk = max(1, _CHUNK_ELEMENTS // (n * n))
    for start in range(0, t.size, chunk):
        block = t[start:start + chunk]
        phases = np.cos(2.0 * coupling[None, :, :] * block[:, None, None])
        out[:, start:start + chunk] = phases.prod(axis=2).T
    return out


def spin_magnetization(i: int, matrix: CouplingMatrix, tau: float) -> float:
    if not 0 <= i < matrix.n:
        raise IndexError(f"spin index {i} out of range for N={matrix.n}")
    return float(np.prod(np.cos(2.0 * matrix.values[i] * tau)))


def _power(values: np.ndarray, j: int) -> np.ndarray:
    out = values.copy()
    for _ in range(j - 1):
        out *= values
    return out


def observable_values(name: str, spins: np.ndarray) -> np.ndarray:
    """Spin-averaged observable from a per-spin (N, T) table."""
    kind, j = parse_observable(name)
    if kind == MAGNETIZATION:
        return 0.5 * spins.mean(axis=0)
    second = _power(spins, j).mean(axis=0)
    if kind == "moment":
        return second
    purity = 0.5 * (1.0 + second)
    if kind == PURITY:
        return purity
    return -np.log(purity)


def _curve(name: str, matrix: CouplingMatrix, grid: TimeGrid) -> RelaxationCurve:
    spins = spin_magnetizations(matrix, grid.values)
    return RelaxationCurve(grid, observable_values(name, spins), name, meta={"N": matrix.n})


def magnetization_curve(matrix: CouplingMatrix, grid: TimeGrid) -> RelaxationCurve:
    return _curve(MAGNETIZATION, matrix, grid)


def moment_curve(j: int, matrix: CouplingMatrix, grid: TimeGrid) -> RelaxationCurve:
    if j < 1:
        raise ValueError(f"moment order must be >= 1, got {j}")
    return _curve(moment_name(j), matrix, grid)


def purity_curve(matrix: CouplingMatrix, grid: TimeGrid) -> RelaxationCurve:
    return _curve(PURITY, matrix, grid)


def renyi2_curve(matrix: CouplingMatrix, grid: TimeGrid) -> RelaxationCurve:
    """Ensemble-averaged single-spin purity expressed as S2 = -log tr(rho^2)."""
    return _curve(RENYI2, matrix, grid)


def spin_histogram(matrix: CouplingMatrix, tau: float, bins: int = 40) -> SpinHistogram:
    if bins < 2:
        raise ValueError(f"need at least 2 bins, got {bins}")
    values = spin_magnetizations(matrix, [tau])[:, 0]
    counts, edges = np.histogram(values, bins=bins, range=(-1.0, 1.0))
    return SpinHistogram(float(tau), edges, counts, matrix.n)


# --- state-vector oracle ---

def _z_energies(matrix: CouplingMatrix) -> np.ndarray:
    """Diagonal of H = sum_{i<k} J_ik Z_i Z_k; spin 0 is the most significant bit."""
    n = matrix.n
    index = np.arange(1 << n, dtype=np.int64)
    signs = [1.0 - 2.0 * ((index >> (n - 1 - i)) & 1) for i in range(n)]
    energies = np.zeros(1 << n)
    for i in range(n):
        for k in range(i + 1, n):
            coupling = matrix.values[i, k]
            if coupling != 0.0:
                energies += coupling * signs[i] * signs[k]
    return energies


def exact_oracle(matrix: CouplingMatrix, grid: TimeGrid) -> tuple[RelaxationCurve, RelaxationCurve]:
    """Magnetization and purity from the full 2^N state vector."""
    n = matrix.n
    if n > MAX_ORACLE_SPINS:
        raise TooLarge(f"state-vector oracle supports N <= {MAX_ORACLE_SPINS}, got {n}")
    energies = _z_energies(matrix)
    norm = 1.0 / math.sqrt(1 << n)
    magnetization = np.empty(len(grid))
    purity = np.empty(len(grid))
    for t_idx, tau in enumerate(grid.values):
        psi = (norm * np.exp(-1j * energies * tau)).reshape((2,) * n)
        sx = np.empty(n)
        pur = np.empty(n)
        for i in range(n):
            block = np.moveaxis(psi, i, 0).reshape(2, -1)
            rho = block @ block.conj().T
            sx[i] = 2.0 * rho[0, 1].real
            pur[i] = np.trace(rho @ rho).real
        magnetization[t_idx] = 0.5 * sx.mean()
        purity[t_idx] = pur.mean()
    meta = {"N": n, "method": "state_vector"}
    return (
        RelaxationCurve(grid, magnetization, MAGNETIZATION, meta=dict(meta)),
        RelaxationCurve(grid, purity, PURITY, meta=dict(meta)),
    )


# --- disorder averaging ---

@dataclass(frozen=True)
class EnsembleTask:
    n: int
    geometry: BallGeometry
    alpha: float
    grid: TimeGrid
    observables: tuple = (MAGNETIZATION,)
    c_alpha: float = 1.0
    anisotropy: Anisotropy | None = None
    max_attempts: int | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"need at least one spin, got {self.n}")
        if not self.observables:
            raise ValueError("no observables requested")
        for name in self.observables:
            parse_observable(name)

    @property
    def d(self) -> int:
        return self.geometry.d

    @property
    def model(self) -> CouplingModel:
        return CouplingModel(self.alpha, self.c_alpha, self.anisotropy)

    @property
    def x(self) -> float:
        g = self.geometry
        return self.n * g.rb ** g.d / g.r0 ** g.d

    def meta(self, n_samples: int, master_seed: int) -> dict:
        return {
            "d": self.d,
            "alpha": self.alpha,
            "N": self.n,
            "N_s": n_samples,
            "r0": self.geometry.r0,
            "rb": self.geometry.rb,
            "x": self.x,
            "c_alpha": self.c_alpha,
            "anisotropy": self.anisotropy.name if self.anisotropy else "isotropic",
            "master_seed": master_seed,
            "jnn_unit": self.grid.unit_scale,
        }


@dataclass
class EnsembleResult:
    curves: dict
    seeds: list
    jnn: np.ndarray
    realizations: dict | None = None

    @property
    def curve(self) -> RelaxationCurve:
        return next(iter(self.curves.values()))


def _realization(task: EnsembleTask, seed: int):
    config = sample_rsa(task.n, task.geometry, seed, task.max_attempts)
    matrix = coupling_matrix(config, task.model)
    spins = spin_magnetizations(matrix, task.grid.values)
    values = {name: observable_values(name, spins) for name in task.observables}
    jnn = float(np.median(nn_couplings(matrix))) if matrix.n > 1 else math.nan
    return values, jnn


def _pairwise_mean(stack: np.ndarray) -> np.ndarray:
    # sum along a contiguous axis so numpy applies pairwise summation
    return np.ascontiguousarray(stack.T).sum(axis=1) / stack.shape[0]


def ensemble_average(
    task: EnsembleTask,
    n_samples: int,
    master_seed: int,
    keep_realizations: bool = False,
    threads: int = 1,
) -> EnsembleResult:
    """Mean over `n_samples` RSA realizations, realization i seeded from
    (master_seed, i). The result does not depend on `threads`."""
    if n_samples < 1:
        raise ValueError(f"need at least one realization, got {n_samples}")
    seeds = [derive_seed(master_seed, i) for i in range(n_samples)]
    logger.info(
        "[Ensemble] N=%d d=%d alpha=%g x=%.3g: %d realizations on %d thread(s)",
        task.n, task.d, task.alpha, task.x, n_samples, threads,
    )
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda s: _realization(task, s), seeds))
    else:
        results = [_realization(task, s) for s in seeds]

    meta = task.meta(n_samples, master_seed)
    curves = {}
    stacks = {}
    for name in task.observables:
        stack = np.stack([values[name] for values, _ in results])
        stacks[name] = stack
        if n_samples > 1:
            stderr = stack.std(axis=0, ddof=1) / math.sqrt(n_samples)
        else:
            stderr = np.zeros(len(task.grid))
        curves[name] = RelaxationCurve(
            task.grid, _pairwise_mean(stack), name, stderr, meta=dict(meta, observable=name)
        )
    jnn = np.array([j for _, j in results])
    return EnsembleResult(curves, seeds, jnn, stacks if keep_realizations else None)


def calibrate_jnn(
    n: int,
    geometry: BallGeometry,
    model: CouplingModel,
    master_seed: int,
    n_calibration: int = 16,
    max_attempts: int | None = None,
) -> float:
    """Ensemble median of the nearest-neighbour coupling over a calibration
    run drawn from a seed stream separate from the production realizations."""
    strongest = []
    for i in range(n_calibration):
        config = sample_rsa(n, geometry, derive_seed(master_seed, i, stream=1), max_attempts)
        strongest.append(nn_couplings(coupling_matrix(config, model)))
    jnn = float(np.median(np.concatenate(strongest)))
    logger.info("[Ensemble] calibrated J_NN=%.6g from %d realizations", jnn, n_calibration)
    return jnn
