"""
Random spin ensembles: uniform points in a d-ball with hard-core exclusion
(random sequential adsorption) and the disorder diagnostics built on them.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import gamma as gamma_fn

from errors import DegenerateGeometry, PackingFailure

logger = logging.getLogger(__name__)

# Retry budget per requested spin when no explicit max_attempts is given.
DEFAULT_ATTEMPTS_PER_SPIN = 1000
# Above this spin count RSA switches from brute force to a cell index.
GRID_INDEX_THRESHOLD = 10_000
STRONG_DISORDER_X = 0.01


def ball_volume(d: int, r: float) -> float:
    """Volume of a d-dimensional ball of radius r."""
    return math.pi ** (d / 2) * r ** d / float(gamma_fn(d / 2 + 1))


@dataclass(frozen=True)
class BallGeometry:
    d: int
    r0: float = 1.0
    rb: float = 0.0

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d}")
        if not self.r0 > 0:
            raise ValueError(f"outer radius must be positive, got {self.r0}")
        if not 0 <= self.rb < 2 * self.r0:
            raise ValueError(f"exclusion radius must lie in [0, 2*r0), got {self.rb}")

    @property
    def volume(self) -> float:
        return ball_volume(self.d, self.r0)

    def density(self, n_spins: int) -> float:
        return n_spins / self.volume


@dataclass(frozen=True)
class DisorderParameter:
    x: float

    def __post_init__(self):
        if self.x < 0:
            raise ValueError(f"disorder parameter must be >= 0, got {self.x}")

    @property
    def strongly_disordered(self) -> bool:
        return self.x <= STRONG_DISORDER_X


@dataclass(frozen=True)
class SpinConfiguration:
    """N spin positions inside a ball. Positions are stored read-only."""

    geometry: BallGeometry
    positions: np.ndarray
    seed: int
    rejections: int = field(default=0, compare=False)

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim == 1 and self.geometry.d == 1:
            pos = pos.reshape(-1, 1)
        if pos.ndim != 2 or pos.shape[1] != self.geometry.d:
            raise ValueError(
                f"positions must have shape (N, {self.geometry.d}), got {pos.shape}"
            )
        if pos.shape[0] < 1:
            raise ValueError("a configuration needs at least one spin")
        radii = np.linalg.norm(pos, axis=1)
        if np.any(radii >= self.geometry.r0):
            raise ValueError("all positions must lie strictly inside the ball")
        if self.geometry.rb > 0 and pos.shape[0] > 1:
            closest = min_pairwise_distance(pos)
            if closest ** 2 < self.geometry.rb ** 2 * (1 - 1e-12):
                raise ValueError(
                    f"pair closer than exclusion radius: {closest} < {self.geometry.rb}"
                )
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.geometry.d

    def scaled(self, factor: float) -> SpinConfiguration:
        """Same configuration with every length multiplied by `factor`."""
        geometry = BallGeometry(self.d, self.geometry.r0 * factor, self.geometry.rb * factor)
        return SpinConfiguration(geometry, self.positions * factor, self.seed)

    def permuted(self, order) -> SpinConfiguration:
        return SpinConfiguration(self.geometry, self.positions[np.asarray(order)], self.seed)


def min_pairwise_distance(positions: np.ndarray) -> float:
    pos = np.asarray(positions, dtype=float)
    if pos.shape[0] < 2:
        return math.inf
    dist, _ = cKDTree(pos).query(pos, k=2)
    return float(dist[:, 1].min())


def pairwise_displacements(positions: np.ndarray) -> np.ndarray:
    """(N, N, d) array of r_i - r_k."""
    pos = np.asarray(positions, dtype=float)
    return pos[:, None, :] - pos[None, :, :]


def derive_seed(master_seed: int, index: int, stream: int = 0) -> int:
    """Independent 64-bit seed for realization `index` of a run."""
    seq = np.random.SeedSequence(master_seed, spawn_key=(stream, index))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def sample_uniform_ball(d: int, r0: float, rng: np.random.Generator) -> np.ndarray:
    """One point drawn uniformly from the open d-ball of radius r0."""
    direction = rng.standard_normal(d)
    norm = np.linalg.norm(direction)
    while norm == 0.0:
        direction = rng.standard_normal(d)
        norm = np.linalg.norm(direction)
    radius = r0 * rng.random() ** (1.0 / d)
    return direction / norm * radius


class _CellIndex:
    """Uniform grid with cell edge rb; conflicts only possible in adjacent cells."""

    def __init__(self, rb: float, d: int):
        self.rb = rb
        self.cells: dict[tuple, list[int]] = {}
        self.offsets = list(itertools.product((-1, 0, 1), repeat=d))

    def _cell(self, point: np.ndarray) -> tuple:
        return tuple(int(c) for c in np.floor(point / self.rb))

    def conflicts(self, point: np.ndarray, positions: np.ndarray) -> bool:
        base = self._cell(point)
        rb2 = self.rb * self.rb
        for off in self.offsets:
            members = self.cells.get(tuple(b + o for b, o in zip(base, off)))
            if not members:
                continue
            diff = positions[members] - point
            if np.min(np.sum(diff * diff, axis=1)) < rb2:
                return True
        return False

    def add(self, point: np.ndarray, index: int):
        self.cells.setdefault(self._cell(point), []).append(index)


def sample_rsa(
    n: int,
    geometry: BallGeometry,
    seed: int,
    max_attempts: int | None = None,
    use_grid: bool | None = None,
) -> SpinConfiguration:
    """Place n spins one after another, redrawing any proposal closer than rb
    to an accepted spin. `max_attempts` bounds the total number of rejections."""
    if n < 1:
        raise ValueError(f"need at least one spin, got {n}")
    if max_attempts is None:
        max_attempts = DEFAULT_ATTEMPTS_PER_SPIN * n
    if use_grid is None:
        use_grid = n > GRID_INDEX_THRESHOLD
    d, r0, rb = geometry.d, geometry.r0, geometry.rb

    rng = np.random.default_rng(seed)
    positions = np.empty((n, d))
    index = _CellIndex(rb, d) if (use_grid and rb > 0) else None
    rb2 = rb * rb
    accepted = 0
    rejections = 0

    while accepted < n:
        point = sample_uniform_ball(d, r0, rng)
        if rb > 0 and accepted > 0:
            if index is not None:
                clash = index.conflicts(point, positions)
            else:
                diff = positions[:accepted] - point
                clash = np.min(np.sum(diff * diff, axis=1)) < rb2
            if clash:
                rejections += 1
                if rejections > max_attempts:
                    x = n * rb ** d / r0 ** d
                    raise PackingFailure(
                        f"RSA gave up after {rejections} rejections with {accepted}/{n} "
                        f"spins placed (x={x:.4g})"
                    )
                continue
        positions[accepted] = point
        if index is not None:
            index.add(point, accepted)
        accepted += 1

    logger.debug("[RSA] placed %d spins in d=%d with %d rejections", n, d, rejections)
    return SpinConfiguration(geometry, positions, seed, rejections=rejections)


def disorder_parameter(config: SpinConfiguration) -> DisorderParameter:
    g = config.geometry
    return DisorderParameter(config.n * g.rb ** g.d / g.r0 ** g.d)


def rb_for_disorder(x: float, n: int, d: int, r0: float = 1.0) -> float:
    """Exclusion radius that gives packing ratio x for n spins."""
    if x < 0:
        raise ValueError(f"disorder parameter must be >= 0, got {x}")
    return r0 * (x / n) ** (1.0 / d)


def check_min_distance(config: SpinConfiguration):
    """Raise DegenerateGeometry when two spins coincide."""
    if config.n > 1 and min_pairwise_distance(config.positions) == 0.0:
        raise DegenerateGeometry("two spins share a position")
