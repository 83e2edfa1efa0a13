"""Finite measures on the working interval: atomic clouds or grid densities.

Both the initial state and the immigration rate are finite measures.  The two
representations share one interface for mass, pairing against functions, and
sampling, which is all the simulator and solvers need.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASS_RTOL = 1e-12


@dataclass(frozen=True)
class Measure:
    """A finite nonnegative measure, atomic or density-on-grid."""

    representation: str                 # "atomic" | "density"
    positions: np.ndarray | None = None
    weights: np.ndarray | None = None
    grid: np.ndarray | None = None      # uniform nodes for the density case
    values: np.ndarray | None = None

    @staticmethod
    def atomic(positions, weights) -> "Measure":
        positions = np.asarray(positions, dtype=float).reshape(-1)
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if positions.shape != weights.shape:
            raise ValueError("positions and weights must have the same length")
        if np.any(weights < 0):
            raise ValueError("atomic weights must be nonnegative")
        return Measure("atomic", positions=positions, weights=weights)

    @staticmethod
    def point(x: float, mass: float = 1.0) -> "Measure":
        return Measure.atomic([x], [mass])

    @staticmethod
    def density(lo: float, hi: float, values) -> "Measure":
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.size < 2:
            raise ValueError("density needs at least 2 grid values")
        if np.any(values < 0):
            raise ValueError("density values must be nonnegative")
        grid = np.linspace(float(lo), float(hi), values.size)
        return Measure("density", grid=grid, values=values)

    @staticmethod
    def uniform(lo: float, hi: float, mass: float, n: int = 201) -> "Measure":
        level = mass / (hi - lo)
        return Measure.density(lo, hi, np.full(n, level))

    @staticmethod
    def from_function(spec, lo: float, hi: float, n: int = 801, mass: float | None = None) -> "Measure":
        """Tabulate a catalog function as a density, optionally rescaled to a target mass."""
        grid = np.linspace(lo, hi, n)
        values = np.clip(spec(grid), 0.0, None)
        raw = np.trapezoid(values, grid)
        if mass is not None:
            if raw <= 0:
                raise ValueError("cannot rescale a zero density to positive mass")
            values = values * (mass / raw)
        return Measure.density(lo, hi, values)

    @staticmethod
    def zero() -> "Measure":
        return Measure.atomic([], [])

    @property
    def total_mass(self) -> float:
        if self.representation == "atomic":
            return float(np.sum(self.weights)) if self.weights.size else 0.0
        return float(np.trapezoid(self.values, self.grid))

    def validate(self) -> None:
        """Re-check the representation invariants; raises ValueError on failure."""
        mass = self.total_mass
        if mass < 0:
            raise ValueError("total mass must be nonnegative")
        if self.representation == "atomic":
            recomputed = float(np.sum(self.weights)) if self.weights.size else 0.0
        else:
            recomputed = float(np.trapezoid(self.values, self.grid))
        if abs(recomputed - mass) > _MASS_RTOL * max(1.0, abs(mass)):
            raise ValueError("stored mass inconsistent with representation")

    def pair(self, f) -> float:
        """Integral of a callable f against the measure."""
        if self.representation == "atomic":
            if self.positions.size == 0:
                return 0.0
            return float(np.dot(self.weights, np.asarray(f(self.positions), dtype=float)))
        return float(np.trapezoid(np.asarray(f(self.grid), dtype=float) * self.values, self.grid))

    def pair_grid(self, xs: np.ndarray, fvals: np.ndarray) -> float:
        """Integral of a grid function (linear interpolation off-node) against the measure."""
        if self.representation == "atomic":
            if self.positions.size == 0:
                return 0.0
            return float(np.dot(self.weights, np.interp(self.positions, xs, fvals)))
        on_nodes = np.interp(self.grid, xs, fvals)
        return float(np.trapezoid(on_nodes * self.values, self.grid))

    def sample(self, n: int, rng: np.random.Generator, stratified: bool = True) -> np.ndarray:
        """Draw n positions from the normalized measure.

        Stratified draws use one uniform per stratum of the inverse CDF, which
        is the lower-variance choice for converting densities into particles.
        """
        if n == 0:
            return np.empty(0)
        if self.total_mass <= 0:
            raise ValueError("cannot sample from a zero measure")
        if stratified:
            u = (np.arange(n) + rng.random(n)) / n
        else:
            u = rng.random(n)
        if self.representation == "atomic":
            cum = np.cumsum(self.weights)
            cum /= cum[-1]
            idx = np.searchsorted(cum, u, side="right")
            return self.positions[np.minimum(idx, self.positions.size - 1)]
        # inverse CDF through the trapezoid cumulative of the density
        mids = 0.5 * (self.values[1:] + self.values[:-1])
        cum = np.concatenate([[0.0], np.cumsum(mids * np.diff(self.grid))])
        cum /= cum[-1]
        # make the CDF strictly increasing for interpolation
        cum = np.maximum.accumulate(cum)
        return np.interp(u, cum, self.grid)

    def to_dict(self) -> dict:
        if self.representation == "atomic":
            return {
                "kind": "atomic",
                "atoms": [[float(x), float(w)] for x, w in zip(self.positions, self.weights)],
            }
        return {
            "kind": "density",
            "lo": float(self.grid[0]),
            "hi": float(self.grid[-1]),
            "values": [float(v) for v in self.values],
        }
