"""
Ising couplings J_ik = f(direction) * C_alpha / |r_i - r_k|^alpha and the
nearest-neighbour coupling scale J_NN used as the unit of time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ensemble import SpinConfiguration, check_min_distance
from errors import DegenerateGeometry, InsufficientSpins


@dataclass(frozen=True)
class Anisotropy:
    """Angular weight f of a factorized interaction.

    `weight` maps unit vectors of shape (..., d) to f. Axially symmetric
    weights also provide `polar`, f as a function of cos(theta) measured from
    the last coordinate axis, plus the kinks of |f| for quadrature.
    """

    name: str
    weight: Callable[[np.ndarray], np.ndarray]
    polar: Optional[Callable[[np.ndarray], np.ndarray]] = None
    polar_breakpoints: tuple = ()
    bound: float = 1.0

    def __call__(self, unit_vectors: np.ndarray) -> np.ndarray:
        return np.asarray(self.weight(unit_vectors), dtype=float)


def _dipolar_polar(cos_theta):
    return 1.0 - 3.0 * np.asarray(cos_theta) ** 2


DIPOLAR = Anisotropy(
    name="dipolar",
    weight=lambda u: _dipolar_polar(np.asarray(u)[..., -1]),
    polar=_dipolar_polar,
    polar_breakpoints=(-1 / math.sqrt(3), 1 / math.sqrt(3)),
    bound=2.0,
)


def constant_anisotropy(c: float) -> Anisotropy:
    return Anisotropy(
        name=f"constant({c:g})",
        weight=lambda u: np.full(np.asarray(u).shape[:-1], float(c)),
        polar=lambda cos_theta: np.full(np.shape(cos_theta), float(c)),
        bound=abs(c),
    )


ANISOTROPIES = {"isotropic": None, "dipolar": DIPOLAR}


def get_anisotropy(name: str | None) -> Anisotropy | None:
    if name is None:
        return None
    try:
        return ANISOTROPIES[name]
    except KeyError:
        raise ValueError(
            f"unknown anisotropy '{name}', choose from {sorted(ANISOTROPIES)}"
        ) from None


@dataclass(frozen=True)
class CouplingModel:
    alpha: float
    c_alpha: float = 1.0
    anisotropy: Anisotropy | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.c_alpha > 0:
            raise ValueError(f"c_alpha must be positive, got {self.c_alpha}")

    @property
    def isotropic(self) -> bool:
        return self.anisotropy is None

    def pair(self, displacement: np.ndarray) -> np.ndarray:
        """Coupling for displacement vectors of shape (..., d)."""
        disp = np.asarray(displacement, dtype=float)
        dist = np.linalg.norm(disp, axis=-1)
        if np.any(dist == 0.0):
            raise DegenerateGeometry("zero distance between two spins")
        values = self.c_alpha / dist ** self.alpha
        if self.anisotropy is not None:
            values = values * self.anisotropy(disp / dist[..., None])
        return values


@dataclass(frozen=True)
class CouplingMatrix:
    values: np.ndarray
    model: CouplingModel | None = field(default=None, compare=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[0] != vals.shape[1]:
            raise ValueError(f"coupling matrix must be square, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("coupling matrix has non-finite entries")
        if np.any(np.diag(vals) != 0.0):
            raise ValueError("coupling matrix diagonal must be zero")
        if not np.array_equal(vals, vals.T):
            raise ValueError("coupling matrix must be symmetric")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def coupling_matrix(config: SpinConfiguration, model: CouplingModel) -> CouplingMatrix:
    check_min_distance(config)
    n = config.n
    values = np.zeros((n, n))
    if n > 1:
        i, k = np.triu_indices(n, 1)
        upper = model.pair(config.positions[i] - config.positions[k])
        values[i, k] = upper
        values[k, i] = upper
    return CouplingMatrix(values, model)


def nn_couplings(matrix: CouplingMatrix) -> np.ndarray:
    """Per-spin strongest |J_ik|; the nearest neighbour for monotone power laws."""
    if matrix.n < 2:
        raise InsufficientSpins(f"nearest-neighbour coupling needs N >= 2, got {matrix.n}")
    return np.abs(matrix.values).max(axis=1)


def median_nn_coupling(matrix: CouplingMatrix) -> float:
    return float(np.median(nn_couplings(matrix)))
