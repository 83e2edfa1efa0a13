"""Branching particle system with migration through the shared noise.

Each particle carries mass 1/theta and follows an Euler step per noise cell:
its own Brownian kick c(x) dB plus the common transport field built from the
white-noise increments.  Branch events fire on per-step Bernoulli clocks and
replace the parent by a litter at its death position; immigration adds
Poisson arrivals drawn from the immigration measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .branching import BranchingLaw
from .errors import InsufficientReplicates, OffGridTime, PopulationExplosion
from .functions import FunctionSpec
from .measures import Measure
from .model import Model
from .noise import NoisePath
from .reporting import EstimateCI

DEFAULT_MAX_PARTICLES = 2_000_000
_TRANSPORT_POINTS = 1601
BOUNDARY_FRACTION_LIMIT = 1e-3


@dataclass
class MeasurePath:
    """Snapshots of the particle cloud at every grid time.

    Mass bookkeeping is exact: populations[i] equals the replayed event log,
    and every snapshot carries weight 1/theta per particle.
    """

    times: np.ndarray
    clouds: list[np.ndarray]
    theta: float
    boundary_hits: int = 0
    particle_steps: int = 0
    event_log: list[tuple[int, str, int]] | None = None
    populations: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.populations is None:
            self.populations = np.array([c.size for c in self.clouds], dtype=np.int64)

    def index_of(self, t: float) -> int:
        pos = (t - self.times[0]) / (self.times[1] - self.times[0])
        idx = int(round(pos))
        if idx < 0 or idx >= len(self.times) or abs(pos - idx) > 1e-6:
            raise OffGridTime(f"t = {t} not recorded on this path")
        return idx

    def cloud_at(self, t: float) -> np.ndarray:
        return self.clouds[self.index_of(t)]

    def total_mass(self, t: float) -> float:
        return self.cloud_at(t).size / self.theta

    def pair(self, phi: FunctionSpec, t: float) -> float:
        """Integral of phi against the empirical measure at time t."""
        cloud = self.cloud_at(t)
        if cloud.size == 0:
            return 0.0
        return float(np.sum(phi(cloud))) / self.theta

    def measure_at(self, t: float) -> Measure:
        cloud = self.cloud_at(t)
        return Measure.atomic(cloud, np.full(cloud.size, 1.0 / self.theta))

    @property
    def boundary_fraction(self) -> float:
        if self.particle_steps == 0:
            return 0.0
        return self.boundary_hits / self.particle_steps

    @property
    def within_boundary_budget(self) -> bool:
        return self.boundary_fraction <= BOUNDARY_FRACTION_LIMIT

    def replay_event_log(self) -> np.ndarray:
        """Population trajectory reconstructed from the event log."""
        if self.event_log is None:
            raise ValueError("path was simulated without event logging")
        pops = np.empty(len(self.times), dtype=np.int64)
        pops[0] = self.populations[0]
        deltas = np.zeros(len(self.times), dtype=np.int64)
        for step, kind, count in self.event_log:
            sign = -1 if kind == "death" else 1
            deltas[step] += sign * count
        pops[1:] = pops[0] + np.cumsum(deltas[1:])
        return pops


def _initial_positions(init: Measure, theta: float, rng: np.random.Generator) -> np.ndarray:
    if init.representation == "atomic":
        copies = np.rint(np.asarray(init.weights) * theta).astype(np.int64)
        return np.repeat(np.asarray(init.positions, dtype=float), copies)
    n = int(math.floor(theta * init.total_mass))
    return init.sample(n, rng, stratified=True)


def _reflect(x: np.ndarray, half_width: float) -> tuple[np.ndarray, int]:
    """Fold positions back into [-L, L], counting how many needed folding."""
    hits = int(np.count_nonzero(np.abs(x) > half_width))
    span = 2.0 * half_width
    # One fold almost always suffices; loop for pathological kicks.
    while np.any(np.abs(x) > half_width):
        x = np.where(x > half_width, span - x, x)
        x = np.where(x < -half_width, -span - x, x)
    return x, hits


def simulate(model: Model, law: BranchingLaw, init: Measure, m: Measure,
             horizon: float, path: NoisePath, seed: int, *,
             max_particles: int = DEFAULT_MAX_PARTICLES,
             log_events: bool = False) -> MeasurePath:
    """Run the particle system to the horizon on the given noise path.

    Branching and immigration randomness derive from ``seed`` alone, so
    replicates with distinct seeds are conditionally independent given the
    path.  Each particle owns a lane of the motion stream keyed by its
    creation index, giving it a private Brownian increment sequence.
    """
    grid = path.grid
    n_steps = grid.time_index(horizon)
    dt = grid.dt
    L = grid.half_width

    init_gen = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, 0))))
    motion_gen = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, 1))))
    branch_gen = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, 2))))
    immig_gen = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, 3))))

    positions = _initial_positions(init, law.theta, init_gen)
    positions, _ = _reflect(positions.copy(), L)
    keys = np.arange(positions.size, dtype=np.int64)
    next_key = positions.size

    has_transport = not model.h.is_zero
    if has_transport:
        # Tabulate the per-step transport field once and interpolate at the
        # particle positions; the table spacing of 0.01 keeps the linear
        # interpolation error far below the Brownian step scale.
        xs_table = np.linspace(-L, L, _TRANSPORT_POINTS)
        kernel_vals = model.h(grid.y_centers()[:, None] - xs_table[None, :])
        g_table = path.increments[:n_steps] @ kernel_vals
    has_diffusion = not model.c.is_zero

    p_event = 1.0 - math.exp(-law.gamma * dt) if law.gamma > 0 else 0.0
    imm_mass = m.total_mass
    imm_mean = law.theta * dt * imm_mass

    times = grid.t0 + np.arange(n_steps + 1) * dt
    clouds = [positions.copy()]
    event_log: list[tuple[int, str, int]] | None = [] if log_events else None
    boundary_hits = 0
    particle_steps = 0
    sqrt_dt = math.sqrt(dt)

    for i in range(n_steps):
        live = positions.size
        particle_steps += live

        if live and (has_diffusion or has_transport):
            # Migration: private Brownian kick plus the shared transport field,
            # both with coefficients frozen at the pre-move position.
            delta = np.zeros(live)
            if has_diffusion:
                row = motion_gen.standard_normal(next_key)
                delta += model.c(positions) * row[keys] * sqrt_dt
            if has_transport:
                delta += np.interp(positions, xs_table, g_table[i])
            positions = positions + delta
            positions, hits = _reflect(positions, L)
            boundary_hits += hits

        if live and p_event > 0.0:
            is_event = branch_gen.random(live) < p_event
            n_events = int(np.count_nonzero(is_event))
            if n_events:
                parents = positions[is_event]
                litters = law.sample_counts(parents, branch_gen)
                children = np.repeat(parents, litters)
                positions = np.concatenate([positions[~is_event], children])
                keys = np.concatenate([
                    keys[~is_event],
                    next_key + np.arange(children.size, dtype=np.int64),
                ])
                next_key += children.size
                if event_log is not None:
                    event_log.append((i + 1, "death", n_events))
                    event_log.append((i + 1, "birth", int(children.size)))

        if imm_mean > 0.0:
            n_new = int(immig_gen.poisson(imm_mean))
            if n_new:
                arrivals = m.sample(n_new, immig_gen, stratified=False)
                arrivals, _ = _reflect(arrivals.copy(), L)
                positions = np.concatenate([positions, arrivals])
                keys = np.concatenate([
                    keys, next_key + np.arange(n_new, dtype=np.int64)])
                next_key += n_new
                if event_log is not None:
                    event_log.append((i + 1, "immigration", n_new))

        if positions.size > max_particles:
            raise PopulationExplosion(
                f"{positions.size} particles at step {i + 1} exceeds cap {max_particles}")
        clouds.append(positions.copy())

    return MeasurePath(times=times, clouds=clouds, theta=law.theta,
                       boundary_hits=boundary_hits, particle_steps=particle_steps,
                       event_log=event_log)


def simulate_mass_only(law: BranchingLaw, init_mass: float, imm_mass: float,
                       horizon: float, dt: float, replicates: int, seed: int, *,
                       max_particles: int = DEFAULT_MAX_PARTICLES) -> tuple[np.ndarray, np.ndarray]:
    """Population trajectories when positions cannot matter.

    Valid only for location-independent laws with no immigration-location
    dependence; the entire replicate block advances through vectorized count
    draws.  Returns (times, masses) with masses of shape (replicates, steps+1).
    """
    if not law.is_constant:
        raise ValueError("mass-only fast path needs a location-independent law")
    n_steps = int(round(horizon / dt))
    if abs(n_steps * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise OffGridTime(f"horizon {horizon} is not a multiple of dt = {dt}")

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, 4))))
    pop = np.full(replicates, int(round(law.theta * init_mass)), dtype=np.int64)
    p_event = 1.0 - math.exp(-law.gamma * dt) if law.gamma > 0 else 0.0
    imm_mean = law.theta * dt * imm_mass
    table = np.asarray(law.table)
    counts = np.asarray(law.counts, dtype=np.int64)

    out = np.empty((replicates, n_steps + 1), dtype=np.int64)
    out[:, 0] = pop
    for i in range(n_steps):
        if p_event > 0.0:
            events = rng.binomial(pop, p_event)
            pop = pop - events
            remaining = events
            tail = 1.0
            # Split the event count over litter sizes by conditional binomials.
            for j, (size, prob) in enumerate(zip(counts, table)):
                if j == len(counts) - 1:
                    taken = remaining
                else:
                    frac = 0.0 if tail <= 0 else min(1.0, prob / tail)
                    taken = rng.binomial(remaining, frac)
                pop = pop + size * taken
                remaining = remaining - taken
                tail -= prob
        if imm_mean > 0.0:
            pop = pop + rng.poisson(imm_mean, size=replicates)
        peak = int(pop.max()) if replicates else 0
        if peak > max_particles:
            raise PopulationExplosion(
                f"{peak} particles at step {i + 1} exceeds cap {max_particles}")
        out[:, i + 1] = pop

    times = np.arange(n_steps + 1) * dt
    return times, out / law.theta


def laplace_estimate(paths: list[MeasurePath], phi: FunctionSpec, t: float) -> EstimateCI:
    """Monte Carlo mean of exp(-<phi, Y_t>) over a replicate set."""
    if len(paths) < 2:
        raise InsufficientReplicates("need at least 2 replicate paths")
    values = np.array([math.exp(-p.pair(phi, t)) for p in paths])
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(values.size))
    return EstimateCI(mean=mean, std_error=se, n=values.size)
