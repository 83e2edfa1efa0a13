"""Finite-difference solvers for the nonlinear log-Laplace SPDE.

The forward equation advances the field one noise cell at a time: reaction
and noise transport are explicit with left-point evaluation, the diffusion
half is a Crank-Nicolson tridiagonal solve.  Zero-Neumann walls preserve
spatially constant solutions, which is what lets constant-coefficient runs
track the Riccati ordinary differential equation exactly in space.

The backward field is obtained by running the forward scheme on the
time-reversed noise and relabeling snapshots, and the conditional Laplace
functional integrates the backward field against the initial and
immigration measures.
"""

from __future__ import annotations

import csv
import io
import math
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_banded

from .errors import BlowUp, CFLViolation, ChecksumMismatch, FormatVersionMismatch, NegativePhiInput
from .functions import FunctionSpec
from .measures import Measure
from .model import Model
from .noise import NoiseGrid, NoisePath

CLIP_FLOOR = -1e-8
BLOWUP_FACTOR = 10.0
DEFAULT_CFL_SAFETY = 0.5

_FIELD_MAGIC = b"FLD1"
_FIELD_HEADER = struct.Struct("<4sHHIIdd")
_FIELD_FOOTER = struct.Struct("<QII")


@dataclass(frozen=True)
class SolverGrid:
    """Uniform space-time grid for the field solvers."""

    half_width: float
    dx: float
    dt: float
    scheme: str = "semi-implicit-diffusion"
    cfl_safety: float = DEFAULT_CFL_SAFETY

    def __post_init__(self):
        if self.scheme not in ("semi-implicit-diffusion", "explicit"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.dx <= 0 or self.dt <= 0 or self.half_width <= 0:
            raise ValueError("grid steps and width must be positive")
        nx = 2.0 * self.half_width / self.dx
        if abs(nx - round(nx)) > 1e-8:
            raise ValueError("domain width is not an integer number of dx steps")

    @property
    def nx(self) -> int:
        return int(round(2.0 * self.half_width / self.dx)) + 1

    def xs(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.nx)

    def refinement_of(self, noise: NoiseGrid) -> int:
        """Sub-steps per noise cell; raises if the grids are incompatible."""
        if abs(noise.half_width - self.half_width) > 1e-9:
            raise ValueError("solver and noise grids cover different domains")
        r_t = noise.dt / self.dt
        r_y = noise.dy / self.dx
        if abs(r_t - round(r_t)) > 1e-8 or round(r_t) < 1:
            raise ValueError(f"solver dt {self.dt} does not refine noise dt {noise.dt}")
        if abs(r_y - round(r_y)) > 1e-8 or round(r_y) < 1:
            raise ValueError(f"solver dx {self.dx} does not refine noise dy {noise.dy}")
        return int(round(r_t))

    def check_stability(self, model: Model, noise: NoiseGrid) -> None:
        """Audit the step-size constraints before any stepping happens."""
        if self.scheme == "explicit":
            a_max = model.a_max()
            if a_max > 0 and self.dt > self.cfl_safety * self.dx ** 2 / a_max:
                raise CFLViolation(
                    f"explicit scheme needs dt <= {self.cfl_safety * self.dx ** 2 / a_max:.3e}, "
                    f"got {self.dt}")
        if not model.h.is_zero:
            # Noise transport check: the squared kernel summed over space
            # cells bounds the per-step transport energy.
            ys = noise.y_centers()
            peak = float(np.max(np.sum(
                model.h(ys[:, None] - self.xs()[None, :]) ** 2, axis=0) * noise.dy))
            if noise.dt * peak > self.cfl_safety * self.dx ** 2:
                raise CFLViolation(
                    f"noise transport needs dt*sum h^2*dy = {noise.dt * peak:.3e} "
                    f"<= {self.cfl_safety * self.dx ** 2:.3e}; refine dt or coarsen dx")


@dataclass
class FieldPath:
    """Field values on the space grid at every solver time level.

    Negative values below the round-off floor are clipped to zero at store
    time; clip_count records how many entries needed it so instability is
    visible instead of silently erased.
    """

    grid: SolverGrid
    times: np.ndarray
    snapshots: np.ndarray
    direction: str = "forward"
    anchor: float | None = None
    clip_count: int = 0
    min_before_clip: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def index_of(self, s: float) -> int:
        pos = (s - self.times[0]) / self.grid.dt
        idx = int(round(pos))
        if idx < 0 or idx >= len(self.times) or abs(pos - idx) > 1e-6:
            raise ValueError(f"time {s} not stored on this field path")
        return idx

    def at_time(self, s: float) -> np.ndarray:
        return self.snapshots[self.index_of(s)]

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[-1]

    def l2_norm(self, s: float) -> float:
        vals = self.at_time(s)
        return math.sqrt(float(np.sum(vals ** 2)) * self.grid.dx)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["time"] + [repr(x) for x in self.grid.xs()])
        for t, row in zip(self.times, self.snapshots):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])
        return buf.getvalue()

    def write_binary(self, destination) -> None:
        """Compact snapshot dump using the same layout as the noise files."""
        levels, nx = self.snapshots.shape
        header = _FIELD_HEADER.pack(_FIELD_MAGIC, 1, 0, levels, nx, self.grid.dt, self.grid.dx)
        payload = np.ascontiguousarray(self.snapshots, dtype="<f8").tobytes()
        crc = zlib.crc32(payload, zlib.crc32(header))
        footer = _FIELD_FOOTER.pack(self.clip_count, crc, 0)
        Path(destination).write_bytes(header + payload + footer)


def read_field_binary(source) -> tuple[np.ndarray, float, float, int]:
    """Read back a binary field dump: (snapshots, dt, dx, clip_count)."""
    raw = Path(source).read_bytes()
    if len(raw) < _FIELD_HEADER.size + _FIELD_FOOTER.size:
        raise ChecksumMismatch(f"{source}: file shorter than header plus footer")
    magic, version, _, levels, nx, dt, dx = _FIELD_HEADER.unpack_from(raw, 0)
    if magic != _FIELD_MAGIC or version != 1:
        raise FormatVersionMismatch(f"{source}: not a version-1 field file")
    expected = _FIELD_HEADER.size + levels * nx * 8 + _FIELD_FOOTER.size
    if len(raw) != expected:
        raise ChecksumMismatch(f"{source}: length {len(raw)}, header implies {expected}")
    clip_count, crc, _ = _FIELD_FOOTER.unpack_from(raw, expected - _FIELD_FOOTER.size)
    if zlib.crc32(raw[:expected - _FIELD_FOOTER.size]) != crc:
        raise ChecksumMismatch(f"{source}: checksum mismatch")
    snaps = np.frombuffer(raw, dtype="<f8", count=levels * nx, offset=_FIELD_HEADER.size)
    return snaps.reshape(levels, nx).copy(), dt, dx, clip_count


# -- shared stepping machinery ------------------------------------------------

class _Stepper:
    """Crank-Nicolson diffusion plus explicit reaction/transport plumbing."""

    def __init__(self, model: Model, grid: SolverGrid):
        self.grid = grid
        self.xs = grid.xs()
        nx = grid.nx
        a_vals = model.coeff("a", self.xs)
        lam = 0.5 * a_vals * grid.dt / grid.dx ** 2   # CN uses half of this twice
        # Second-difference operator rows with mirror ghosts (zero Neumann).
        sub = 0.5 * lam
        main = -lam
        sup = 0.5 * lam
        self._apply_sub = sub.copy()
        self._apply_main = main.copy()
        self._apply_sup = sup.copy()
        self._apply_sup[0] = lam[0]
        self._apply_sub[-1] = lam[-1]
        # Banded matrix for (I - CN half), ordered (upper, diag, lower).
        self._banded = np.zeros((3, nx))
        self._banded[0, 1:] = -self._apply_sup[:-1]
        self._banded[1, :] = 1.0 - self._apply_main
        self._banded[2, :-1] = -self._apply_sub[1:]

    def explicit_half(self, psi: np.ndarray) -> np.ndarray:
        """(CN explicit half) psi, with mirror ghost nodes."""
        out = self._apply_main * psi
        out[:-1] += self._apply_sup[:-1] * psi[1:]
        out[1:] += self._apply_sub[1:] * psi[:-1]
        return psi + out

    def diffuse(self, rhs: np.ndarray) -> np.ndarray:
        return solve_banded((1, 1), self._banded, rhs)

    def gradient(self, psi: np.ndarray) -> np.ndarray:
        """Central differences with mirror ghosts, zero slope at the walls."""
        grad = np.empty_like(psi)
        grad[1:-1] = (psi[2:] - psi[:-2]) / (2.0 * self.grid.dx)
        grad[0] = 0.0
        grad[-1] = 0.0
        return grad


def _clip_negative(psi: np.ndarray, stats: dict) -> np.ndarray:
    low = float(psi.min()) if psi.size else 0.0
    if low < stats.get("min_before_clip", 0.0):
        stats["min_before_clip"] = low
    if low < CLIP_FLOOR:
        mask = psi < CLIP_FLOOR
        stats["clip_count"] = stats.get("clip_count", 0) + int(np.count_nonzero(mask))
        psi = np.where(mask, 0.0, psi)
    return psi


def solve_forward(model: Model, phi: FunctionSpec, path: NoisePath, grid: SolverGrid,
                  t: float) -> FieldPath:
    """Advance the nonlinear field from phi to the horizon along the path."""
    noise_grid = path.grid
    grid.check_stability(model, noise_grid)
    refine = grid.refinement_of(noise_grid)
    n_cells = noise_grid.time_index(t)

    stepper = _Stepper(model, grid)
    xs = stepper.xs
    psi = np.asarray(phi(xs), dtype=float).copy()
    if np.any(psi < -1e-12):
        raise NegativePhiInput(f"initial field has min {psi.min():.3e} < 0")
    max_phi = float(psi.max())
    blow_limit = BLOWUP_FACTOR * max_phi + 1e-12

    b_vals = model.b(xs)
    sigma_vals = model.sigma(xs)
    has_transport = not model.h.is_zero
    if has_transport:
        kernel_vals = model.h(noise_grid.y_centers()[:, None] - xs[None, :])
        g_table = path.increments[:n_cells] @ kernel_vals

    dt = grid.dt
    stats: dict = {"clip_count": 0, "min_before_clip": 0.0}
    snapshots = np.empty((n_cells * refine + 1, grid.nx))
    snapshots[0] = psi
    level = 0
    for i in range(n_cells):
        for s in range(refine):
            rhs = stepper.explicit_half(psi)
            rhs += dt * (-b_vals * psi - 0.5 * sigma_vals * psi ** 2)
            if has_transport and s == 0:
                # Left-point rule: the whole cell increment acts on the field
                # as it stands at the cell's opening time.
                rhs += stepper.gradient(psi) * g_table[i]
            psi = stepper.diffuse(rhs)
            psi = _clip_negative(psi, stats)
            peak = float(np.abs(psi).max())
            if peak > blow_limit:
                raise BlowUp(
                    f"field reached {peak:.3e} > {blow_limit:.3e} at solver step {level + 1}")
            level += 1
            snapshots[level] = psi

    times = np.arange(n_cells * refine + 1) * dt
    return FieldPath(grid=grid, times=times, snapshots=snapshots, direction="forward",
                     clip_count=stats["clip_count"], min_before_clip=stats["min_before_clip"])


def solve_backward(model: Model, phi: FunctionSpec, r: float, t: float, path: NoisePath,
                   grid: SolverGrid) -> FieldPath:
    """Field indexed by starting time s in [r, t] with terminal data phi at t.

    Solving the forward scheme against the time-reversed noise and reading
    the snapshots backwards yields the backward field; the entry at s = t is
    phi itself.
    """
    from .noise import reverse_path
    if r > t:
        raise ValueError("need r <= t")
    if r == t:
        xs = grid.xs()
        vals = np.asarray(phi(xs), dtype=float)[None, :]
        return FieldPath(grid=grid, times=np.array([t]), snapshots=vals.copy(),
                         direction="backward", anchor=t)
    # The reversed path negates each increment.  For the pathwise coupling
    # with the particle system the field must see every cell increment with
    # the same orientation the particles saw, so flip the sign back and keep
    # only the order reversal.  With the negation left in, the two sides
    # agree in law but anti-correlate realization by realization; the
    # conditional duality experiment is the arbiter and pins this choice.
    rev = reverse_path(path, t)
    oriented = NoisePath(grid=rev.grid, increments=-rev.increments, seed=rev.seed)
    forward = solve_forward(model, phi, oriented, grid, t - r)
    snaps = forward.snapshots[::-1].copy()
    times = r + forward.times
    return FieldPath(grid=grid, times=times, snapshots=snaps, direction="backward",
                     anchor=t, clip_count=forward.clip_count,
                     min_before_clip=forward.min_before_clip)


def clf(model: Model, mu: Measure, m: Measure, phi: FunctionSpec, path: NoisePath,
        t: float, grid: SolverGrid) -> float:
    """Conditional Laplace functional exp{-<psi_0, mu> - int_0^t <psi_s, m> ds}."""
    back = solve_backward(model, phi, 0.0, t, path, grid)
    xs = grid.xs()
    exponent = mu.pair_grid(xs, back.snapshots[0]) if mu.total_mass > 0 else 0.0
    if m.total_mass > 0:
        inner = np.array([m.pair_grid(xs, row) for row in back.snapshots])
        exponent += float(np.trapezoid(inner, dx=grid.dt))
    return math.exp(-exponent)


def solve_linear_density(model: Model, v0: Measure, path: NoisePath, grid: SolverGrid,
                         t: float) -> FieldPath:
    """Advance the linear density equation in conservative (flux) form.

    Both the diffusion of a*v and the noise transport difference flux
    averages with zero wall flux, so the only mass change per step is the
    exact exponential kill factor; total mass is deterministic pathwise.
    """
    noise_grid = path.grid
    grid.check_stability(model, noise_grid)
    refine = grid.refinement_of(noise_grid)
    n_cells = noise_grid.time_index(t)

    xs = grid.xs()
    nx = grid.nx
    dx, dt = grid.dx, grid.dt
    if v0.representation != "density":
        raise ValueError("linear solver needs a density initial measure")
    v = np.interp(xs, v0.grid, v0.values, left=0.0, right=0.0)

    a_vals = model.coeff("a", xs)
    decay = np.exp(-model.b(xs) * dt)
    has_transport = not model.h.is_zero
    if has_transport:
        kernel_vals = model.h(noise_grid.y_centers()[:, None] - xs[None, :])
        g_table = path.increments[:n_cells] @ kernel_vals

    # Flux-form Laplacian of u = a v: interior flux differences, sealed walls.
    def flux_laplacian(u: np.ndarray) -> np.ndarray:
        out = np.zeros_like(u)
        diff = u[1:] - u[:-1]
        out[:-1] += diff
        out[1:] -= diff
        return out

    # CN halves of 0.5 * (a v)'' carry coefficient dt/4 per application.
    half = 0.25 * dt / dx ** 2
    banded = np.zeros((3, nx))
    banded[1, :] = 1.0
    banded[0, 1:] += -half * a_vals[1:]          # super: coefficient of v[i+1]
    banded[2, :-1] += -half * a_vals[:-1]        # sub: coefficient of v[i-1]
    banded[1, 0] += half * a_vals[0]
    banded[1, -1] += half * a_vals[-1]
    banded[1, 1:-1] += 2.0 * half * a_vals[1:-1]

    stats: dict = {"clip_count": 0, "min_before_clip": 0.0}
    snapshots = np.empty((n_cells * refine + 1, nx))
    snapshots[0] = v
    level = 0
    for i in range(n_cells):
        for s in range(refine):
            rhs = v + half * flux_laplacian(a_vals * v)
            if has_transport and s == 0:
                # Stochastic term -d/dx (g v): edge-averaged fluxes with
                # sealed walls, so the sum over nodes telescopes to zero.
                gv = g_table[i] * v
                edge = 0.5 * (gv[1:] + gv[:-1])
                rhs[:-1] -= edge / dx
                rhs[1:] += edge / dx
            v = solve_banded((1, 1), banded, rhs)
            v *= decay
            v = _clip_negative(v, stats)
            level += 1
            snapshots[level] = v

    times = np.arange(n_cells * refine + 1) * dt
    return FieldPath(grid=grid, times=times, snapshots=snapshots, direction="forward",
                     clip_count=stats["clip_count"], min_before_clip=stats["min_before_clip"])
