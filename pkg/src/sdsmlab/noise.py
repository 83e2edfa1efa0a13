"""Discretized time-space white noise shared by particles and solvers.

Increments live on a rectangular grid of time cells x space cells and are
sampled from a counter-based generator (Philox) through the inverse normal
CDF, so every cell's value is a fixed function of (seed, cell index) and the
array never depends on fill order.  Paths are immutable once sampled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import GridOverflow, OffGridTime
from .functions import FunctionSpec

DEFAULT_BUDGET_BYTES = 1 << 30
_TIME_ATOL = 1e-9


@dataclass(frozen=True)
class NoiseGrid:
    """Uniform cell grid on [t0, t1] x [-half_width, half_width]."""

    t1: float
    dt: float
    half_width: float
    dy: float
    t0: float = 0.0

    def __post_init__(self):
        if self.dt <= 0 or self.dy <= 0:
            raise ValueError("dt and dy must be positive")
        if self.t1 <= self.t0:
            raise ValueError("t1 must exceed t0")
        for span, step, name in (
            (self.t1 - self.t0, self.dt, "time"),
            (2.0 * self.half_width, self.dy, "space"),
        ):
            ratio = span / step
            if abs(ratio - round(ratio)) > 1e-8 * max(1.0, ratio):
                raise ValueError(f"{name} span is not an integer number of steps")

    @property
    def nt(self) -> int:
        return int(round((self.t1 - self.t0) / self.dt))

    @property
    def ny(self) -> int:
        return int(round(2.0 * self.half_width / self.dy))

    def y_centers(self) -> np.ndarray:
        return -self.half_width + (np.arange(self.ny) + 0.5) * self.dy

    def time_index(self, t: float) -> int:
        """Index of the grid time t among cell boundaries; raises OffGridTime."""
        pos = (t - self.t0) / self.dt
        idx = int(round(pos))
        if idx < 0 or idx > self.nt or abs(pos - idx) > _TIME_ATOL * max(1.0, abs(pos)) + _TIME_ATOL:
            raise OffGridTime(f"t = {t} is not a grid time of [{self.t0}, {self.t1}] step {self.dt}")
        return idx


@dataclass(frozen=True)
class NoisePath:
    """Sampled white-noise increments; increments[i][j] ~ N(0, dt*dy)."""

    grid: NoiseGrid
    increments: np.ndarray
    seed: int | None

    def __post_init__(self):
        self.increments.setflags(write=False)


def sample_path(grid: NoiseGrid, seed: int, budget_bytes: int = DEFAULT_BUDGET_BYTES) -> NoisePath:
    """Sample the increment array for (grid, seed).

    Cell (i, j) consumes exactly one 64-bit word at counter position
    i * ny + j, so regeneration is bit-exact and trivially parallel.
    """
    nt, ny = grid.nt, grid.ny
    nbytes = nt * ny * 8
    if nbytes > budget_bytes:
        raise GridOverflow(f"increment array needs {nbytes} bytes > budget {budget_bytes}")
    bitgen = np.random.Philox(key=seed)
    words = np.random.Generator(bitgen).integers(
        0, 2**64, size=(nt, ny), dtype=np.uint64, endpoint=False
    )
    uniforms = (words.astype(np.float64) + 0.5) * 2.0**-64
    increments = ndtri(uniforms) * np.sqrt(grid.dt * grid.dy)
    return NoisePath(grid=grid, increments=increments, seed=int(seed))


def reverse_path(path: NoisePath, t: float) -> NoisePath:
    """Time-reverse the noise about t: the cell over [s, s+dt) maps, negated, to [t-s-dt, t-s).

    The reversed path lives on [0, t] with the same space grid.  Applying the
    operation twice returns the original increments bit-exactly.
    """
    grid = path.grid
    if grid.t0 != 0.0:
        raise OffGridTime("reversal is defined for paths starting at time 0")
    i_t = grid.time_index(t)
    if i_t == 0:
        raise OffGridTime("cannot reverse about t = 0")
    rev = -path.increments[i_t - 1::-1, :]
    new_grid = NoiseGrid(t1=i_t * grid.dt, dt=grid.dt, half_width=grid.half_width, dy=grid.dy)
    return NoisePath(grid=new_grid, increments=np.ascontiguousarray(rev), seed=path.seed)


def integrate(path: NoisePath, f, r: float, t: float) -> float:
    """Left-point (Ito) integral of a deterministic grid function against the path.

    f may be a callable f(s, y) taking arrays, or a 2D array over the cells of
    [r, t] x space.
    """
    grid = path.grid
    i_r, i_t = grid.time_index(r), grid.time_index(t)
    if i_t < i_r:
        raise OffGridTime("need r <= t")
    if i_t == i_r:
        return 0.0
    block = path.increments[i_r:i_t, :]
    if callable(f):
        s_left = grid.t0 + np.arange(i_r, i_t) * grid.dt
        fvals = np.asarray(f(s_left[:, None], grid.y_centers()[None, :]), dtype=float)
        fvals = np.broadcast_to(fvals, block.shape)
    else:
        fvals = np.asarray(f, dtype=float)
        if fvals.shape != block.shape:
            raise ValueError(f"grid function shape {fvals.shape} != {block.shape}")
    return float(np.sum(fvals * block))


# -- spectral smoothing -------------------------------------------------------

def basis_function(j: int, xs: np.ndarray, half_width: float, derivative: int = 0) -> np.ndarray:
    """Member j (0-based) of the orthonormal trig family on [-L, L].

    Ordering: constant, cos(pi x/L), sin(pi x/L), cos(2 pi x/L), sin(2 pi x/L), ...
    """
    L = half_width
    xs = np.asarray(xs, dtype=float)
    if j == 0:
        if derivative == 0:
            return np.full_like(xs, 1.0 / np.sqrt(2.0 * L))
        return np.zeros_like(xs)
    m = (j + 1) // 2
    w = m * np.pi / L
    if j % 2 == 1:  # cosine member
        if derivative == 0:
            return np.cos(w * xs) / np.sqrt(L)
        return -w * np.sin(w * xs) / np.sqrt(L)
    if derivative == 0:
        return np.sin(w * xs) / np.sqrt(L)
    return w * np.cos(w * xs) / np.sqrt(L)


@dataclass(frozen=True)
class SmoothedNoise:
    """Projection of a path onto the first few spatial basis members.

    basis_coeffs[i, j] is the increment of W_j over time cell i; each column
    is a discrete Brownian increment sequence and distinct columns are
    uncorrelated.
    """

    source: NoisePath
    epsilon: float
    basis_coeffs: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.basis_coeffs.shape[1]

    def basis_matrix(self, xs: np.ndarray, derivative: int = 0) -> np.ndarray:
        """Stack of basis members evaluated at xs, shape (n_modes, len(xs))."""
        L = self.source.grid.half_width
        return np.stack([
            basis_function(j, xs, L, derivative) for j in range(self.n_modes)
        ])

    def as_increments(self) -> np.ndarray:
        """Reconstruct cell increments of the smoothed noise on the source grid."""
        grid = self.source.grid
        B = self.basis_matrix(grid.y_centers())
        return self.basis_coeffs @ B * grid.dy


def spectral_project(path: NoisePath, epsilon: float) -> SmoothedNoise:
    """Project the path on the first floor(1/epsilon) basis members (left-point rule)."""
    n_modes = int(np.floor(1.0 / epsilon))
    if n_modes < 1:
        raise ValueError("epsilon must satisfy floor(1/epsilon) >= 1")
    grid = path.grid
    B = np.stack([
        basis_function(j, grid.y_centers(), grid.half_width) for j in range(n_modes)
    ])
    coeffs = path.increments @ B.T
    return SmoothedNoise(source=path, epsilon=float(epsilon), basis_coeffs=coeffs)


def integrate_smoothed(sm: SmoothedNoise, f, r: float, t: float) -> float:
    """Ito integral of a grid function against the smoothed noise."""
    grid = sm.source.grid
    i_r, i_t = grid.time_index(r), grid.time_index(t)
    if i_t <= i_r:
        return 0.0
    ys = grid.y_centers()
    s_left = grid.t0 + np.arange(i_r, i_t) * grid.dt
    fvals = np.asarray(f(s_left[:, None], ys[None, :]), dtype=float)
    fvals = np.broadcast_to(fvals, (i_t - i_r, ys.size))
    B = sm.basis_matrix(ys)
    projected = fvals @ B.T * grid.dy           # (time cells, modes)
    return float(np.sum(projected * sm.basis_coeffs[i_r:i_t, :]))


# -- shared transport fields --------------------------------------------------

def transport_field(path: NoisePath, kernel: FunctionSpec, xs: np.ndarray,
                    derivative: int = 0) -> np.ndarray:
    """Per-step field G[i](x) = sum_j kernel^{(d)}(y_j - x) dW[i][j] at the points xs.

    This is the one object both the particle migration and the solver
    transport consume, so the two sides see literally the same noise.
    """
    ys = path.grid.y_centers()
    K = kernel(ys[:, None] - xs[None, :], derivative)
    return path.increments @ K


def smoothed_transport_field(sm: SmoothedNoise, kernel: FunctionSpec, xs: np.ndarray,
                             derivative: int = 0) -> np.ndarray:
    """Same field for the smoothed noise: G[i](x) = sum_j dW_j[i] * int k^{(d)}(y-x) b_j(y) dy."""
    grid = sm.source.grid
    ys = grid.y_centers()
    K = kernel(ys[:, None] - xs[None, :], derivative)   # (ny, nx)
    B = sm.basis_matrix(ys)                              # (modes, ny)
    conv = B @ K * grid.dy                               # (modes, nx)
    return sm.basis_coeffs @ conv
