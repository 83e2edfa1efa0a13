"""Mollified field equation and its weighted-particle representation.

The smoothed flavor replaces the initial data by a Gaussian mollification,
caps the quadratic term through a norm-dependent damping factor, and drives
the transport with a finite spectral projection of the noise.  The particle
flavor carries the same field as a cloud of weighted walkers whose kernel
density estimate is fed back into the weight dynamics each step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .errors import BlowUp, DegenerateWeights, NegativePhiInput
from .functions import FunctionSpec
from .model import Model
from .noise import NoisePath, SmoothedNoise, smoothed_transport_field, spectral_project
from .solver import FieldPath, SolverGrid, _clip_negative, _Stepper

DEFAULT_WEIGHT_RATIO_CAP = 1e6
_TABLE_POINTS = 1601


def mollify(values: np.ndarray, dx: float, epsilon: float) -> np.ndarray:
    """Gaussian smoothing with variance epsilon on a uniform node grid."""
    return gaussian_filter1d(values, sigma=math.sqrt(epsilon) / dx, mode="mirror")


def damping_factor(smoothed: np.ndarray, dx: float, epsilon: float) -> float:
    """min(||T_eps psi||, 1/eps) / ||T_eps psi|| with the grid L2 norm."""
    norm = math.sqrt(float(np.sum(smoothed ** 2)) * dx)
    if norm == 0.0:
        return 1.0
    return min(norm, 1.0 / epsilon) / norm


def solve_smoothed(model: Model, phi: FunctionSpec, epsilon: float, path: NoisePath,
                   grid: SolverGrid, t: float) -> FieldPath:
    """Forward stepping of the mollified equation driven by projected noise."""
    noise_grid = path.grid
    grid.check_stability(model, noise_grid)
    refine = grid.refinement_of(noise_grid)
    n_cells = noise_grid.time_index(t)

    stepper = _Stepper(model, grid)
    xs = stepper.xs
    raw = np.asarray(phi(xs), dtype=float)
    if np.any(raw < -1e-12):
        raise NegativePhiInput(f"initial field has min {raw.min():.3e} < 0")
    psi = mollify(raw, grid.dx, epsilon)
    blow_limit = 10.0 * float(raw.max()) + 1e-12

    b_vals = model.b(xs)
    sigma_vals = model.sigma(xs)
    has_transport = not model.h.is_zero
    if has_transport:
        sm = spectral_project(path, epsilon)
        g_table = smoothed_transport_field(sm, model.h, xs)[:n_cells]

    dt = grid.dt
    stats: dict = {"clip_count": 0, "min_before_clip": 0.0}
    snapshots = np.empty((n_cells * refine + 1, grid.nx))
    snapshots[0] = psi
    level = 0
    for i in range(n_cells):
        for s in range(refine):
            smoothed = mollify(psi, grid.dx, epsilon)
            d_eps = damping_factor(smoothed, grid.dx, epsilon)
            rhs = stepper.explicit_half(psi)
            rhs += dt * (-b_vals * psi - 0.5 * sigma_vals * d_eps * psi * smoothed)
            if has_transport and s == 0:
                rhs += stepper.gradient(psi) * g_table[i]
            psi = stepper.diffuse(rhs)
            psi = _clip_negative(psi, stats)
            if float(np.abs(psi).max()) > blow_limit:
                raise BlowUp(f"smoothed field exceeded {blow_limit:.3e} at level {level + 1}")
            level += 1
            snapshots[level] = psi

    times = np.arange(n_cells * refine + 1) * dt
    return FieldPath(grid=grid, times=times, snapshots=snapshots, direction="forward",
                     clip_count=stats["clip_count"], min_before_clip=stats["min_before_clip"])


@dataclass
class WeightedCloud:
    """Positions and nonnegative weights representing a field snapshot."""

    xi: np.ndarray
    w: np.ndarray
    bandwidth: float

    @property
    def n(self) -> int:
        return self.xi.size

    @property
    def mass(self) -> float:
        """Pairing with the constant function 1: the mean weight."""
        return float(self.w.mean()) if self.n else 0.0

    def density(self, grid: SolverGrid) -> np.ndarray:
        """Kernel density reconstruction of the field on the grid nodes."""
        L, dx, nx = grid.half_width, grid.dx, grid.nx
        edges = np.linspace(-L - 0.5 * dx, L + 0.5 * dx, nx + 1)
        hist, _ = np.histogram(self.xi, bins=edges, weights=self.w)
        raw = hist / (self.n * dx)
        return gaussian_filter1d(raw, sigma=self.bandwidth / dx, mode="constant")


def default_bandwidth(n: int, half_width: float) -> float:
    return n ** (-0.2) * (2.0 * half_width) / 4.0


def weighted_particle_solve(model: Model, phi: FunctionSpec, epsilon: float,
                            path: NoisePath, n: int, seed: int, *,
                            grid: SolverGrid | None = None, t: float | None = None,
                            bandwidth: float | None = None,
                            weight_ratio_cap: float = DEFAULT_WEIGHT_RATIO_CAP) -> FieldPath:
    """Represent the mollified field by n weighted walkers.

    Walkers move against the smoothed transport with a 2cc' correction
    drift; weights follow a linear equation integrated in exponential form,
    which keeps them nonnegative and makes pure-decay runs exact.  The
    snapshot at each level is the kernel density estimate of the cloud.
    """
    if n < 1000:
        raise ValueError("need at least 1000 walkers for a usable estimate")
    noise_grid = path.grid
    L = noise_grid.half_width
    if grid is None:
        grid = SolverGrid(half_width=L, dx=noise_grid.dy, dt=noise_grid.dt)
    if t is None:
        t = noise_grid.t1
    n_cells = noise_grid.time_index(t)
    if grid.refinement_of(noise_grid) != 1:
        raise ValueError("walker stepping uses the noise time step directly")
    dt = noise_grid.dt
    if bandwidth is None:
        bandwidth = default_bandwidth(n, L)

    sm = spectral_project(path, epsilon)
    xs = grid.xs()

    # Tables of the projected kernel and its derivative on a fine grid; each
    # step combines them with the mode increments and interpolates at the
    # walker positions.
    xt = np.linspace(-L, L, _TABLE_POINTS)
    has_transport = not model.h.is_zero
    if has_transport:
        ys = noise_grid.y_centers()
        B = sm.basis_matrix(ys)
        h_tab = B @ model.h(ys[:, None] - xt[None, :]) * noise_grid.dy
        hd_tab = B @ model.h(ys[:, None] - xt[None, :], 1) * noise_grid.dy
        qv_tab = np.sum(hd_tab ** 2, axis=0)

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, 5))))
    u = (np.arange(n) + rng.random(n)) / n
    xi = -L + 2.0 * L * u
    raw_phi = np.asarray(phi(xs), dtype=float)
    if np.any(raw_phi < -1e-12):
        raise NegativePhiInput(f"initial field has min {raw_phi.min():.3e} < 0")
    target = mollify(raw_phi, grid.dx, epsilon)
    w = 2.0 * L * np.interp(xi, xs, target)

    has_diffusion = not model.c.is_zero
    sqrt_dt = math.sqrt(dt)
    span = 2.0 * L
    stats: dict = {"clip_count": 0, "min_before_clip": 0.0}
    snapshots = np.empty((n_cells + 1, grid.nx))
    cloud = WeightedCloud(xi=xi, w=w, bandwidth=bandwidth)
    snapshots[0] = _clip_negative(cloud.density(grid), stats)

    for i in range(n_cells):
        density = snapshots[i]
        smoothed = mollify(density, grid.dx, epsilon)
        d_eps = damping_factor(smoothed, grid.dx, epsilon)
        feedback = 0.5 * model.sigma(xi) * d_eps * np.interp(xi, xs, smoothed)

        log_growth = (0.5 * model.coeff("a", xi, 2) - model.b(xi) - feedback) * dt
        if has_transport:
            # The weight noise is the derivative of the transport kernel in
            # the walker variable, d/dxi h(y - xi) = -h'(y - xi), paired with
            # the same mode increments; together with the -G position kick
            # the pushforward reproduces the field's G * dpsi/dx transport
            # with no spurious divergence term.  The dt term is the
            # compensator that makes the exponential update mean-one.
            noise_kick = np.interp(xi, xt, sm.basis_coeffs[i] @ hd_tab)
            log_growth += -0.5 * np.interp(xi, xt, qv_tab) * dt + noise_kick
        w = w * np.exp(log_growth)

        move = np.zeros(n)
        if has_diffusion:
            move += model.c(xi) * rng.standard_normal(n) * sqrt_dt
            move += 2.0 * model.c(xi) * model.c(xi, 1) * dt
        if has_transport:
            g_at = np.interp(xi, xt, sm.basis_coeffs[i] @ h_tab)
            move -= g_at
        xi = xi + move
        while np.any(np.abs(xi) > L):
            xi = np.where(xi > L, span - xi, xi)
            xi = np.where(xi < -L, -span - xi, xi)

        mean_w = float(w.mean())
        if mean_w > 0 and float(w.max()) / mean_w > weight_ratio_cap:
            raise DegenerateWeights(
                f"weight ratio {w.max() / mean_w:.3e} exceeds cap {weight_ratio_cap:.1e}")

        cloud = WeightedCloud(xi=xi, w=w, bandwidth=bandwidth)
        snapshots[i + 1] = _clip_negative(cloud.density(grid), stats)

    times = np.arange(n_cells + 1) * dt
    return FieldPath(grid=grid, times=times, snapshots=snapshots, direction="forward",
                     clip_count=stats["clip_count"], min_before_clip=stats["min_before_clip"],
                     diagnostics={"final_cloud": cloud})
