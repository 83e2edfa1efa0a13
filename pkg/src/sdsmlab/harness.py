"""Statistical experiments pitting particle Monte Carlo against solver output.

Each experiment returns an ExperimentReport whose rows carry a predicted
value, an estimate, a standard error, and a pass flag at a stated tolerance.
Reports are deterministic functions of the inputs and seeds: replicate work
may fan out over process lanes, but per-replicate values are reassembled in
replicate order before any reduction, so the lane count never changes a byte
of the output.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .branching import BranchingLaw, pure_death
from .errors import HypothesisViolated, InsufficientReplicates, OffGridTime
from .functions import FunctionSpec, constant
from .measures import Measure
from .model import Model
from .noise import NoiseGrid, NoisePath, sample_path
from .particles import simulate, simulate_mass_only
from .reporting import ExperimentReport, ReportRow
from .solver import SolverGrid, clf, solve_forward, solve_linear_density

MIN_INITIAL_PARTICLES = 50
_MASS_CHUNK = 2048
_POOL_TAG = 101
_RESAMPLE_TAG = 202
_CHUNK_TAG = 303
_LADDER_TAG = 404


def matched_noise_grid(grid: SolverGrid, horizon: float) -> NoiseGrid:
    """Noise grid sharing the solver's domain, cell width, and time step."""
    return NoiseGrid(t1=horizon, dt=grid.dt, half_width=grid.half_width, dy=grid.dx)


def derived_seed(seed: int, *tags: int) -> int:
    """Deterministic 64-bit child seed, decorrelated across distinct tags."""
    seq = np.random.SeedSequence(tuple(int(v) for v in (seed, *tags)))
    return int(seq.generate_state(1, np.uint64)[0])


def _split_chunks(items: list, lanes: int) -> list[list]:
    lanes = max(1, int(lanes))
    size = max(1, (len(items) + lanes - 1) // lanes)
    return [items[i:i + size] for i in range(0, len(items), size)]


def _run_ordered(worker, arg_list: list, lanes: int) -> list:
    """Map a worker over arguments, results in argument order.

    With one lane everything runs inline; with more, a process pool does the
    same map.  Workers are pure functions of their argument tuple, so both
    routes produce identical values.
    """
    if lanes <= 1 or len(arg_list) <= 1:
        return [worker(a) for a in arg_list]
    with ProcessPoolExecutor(max_workers=min(lanes, len(arg_list))) as pool:
        return list(pool.map(worker, arg_list))


def _laplace_chunk(args) -> tuple[np.ndarray, int, int]:
    """Replicate block of exp(-<phi_j, X_t>) draws on one shared noise path."""
    model, law, mu, m, t, path, phis, seeds = args
    values = np.empty((len(seeds), len(phis)))
    hits = 0
    steps = 0
    for i, s in enumerate(seeds):
        mp = simulate(model, law, mu, m, t, path, s)
        hits += mp.boundary_hits
        steps += mp.particle_steps
        for j, phi in enumerate(phis):
            values[i, j] = math.exp(-mp.pair(phi, t))
    return values, hits, steps


def _resampled_chunk(args) -> np.ndarray:
    """Like _laplace_chunk for one phi, but a fresh noise path per replicate."""
    model, law, mu, m, t, noise_grid, pairs, phi = args
    out = np.empty(len(pairs))
    for i, (noise_seed, branch_seed) in enumerate(pairs):
        path = sample_path(noise_grid, noise_seed)
        mp = simulate(model, law, mu, m, t, path, branch_seed)
        out[i] = math.exp(-mp.pair(phi, t))
    return out


def _laplace_battery(model, law, mu, m, t, path, phis, branch_seeds, lanes):
    chunks = _split_chunks(list(branch_seeds), lanes)
    args = [(model, law, mu, m, t, path, phis, c) for c in chunks]
    parts = _run_ordered(_laplace_chunk, args, lanes)
    values = np.vstack([p[0] for p in parts])
    hits = sum(p[1] for p in parts)
    steps = sum(p[2] for p in parts)
    return values, hits, steps


def duality_experiment(model: Model, law: BranchingLaw, mu: Measure, m: Measure,
                       phis: list[FunctionSpec], t: float, noise_seeds, branch_seeds,
                       grid: SolverGrid, *, solver_seeds=None, lanes: int = 1,
                       margin: float = 0.02, pooled: bool = True,
                       variance_signature: bool = False,
                       noise_paths: list[NoisePath] | None = None) -> ExperimentReport:
    """Conditional and pooled Laplace functionals, particles against solver.

    For every noise seed one path is drawn and shared by all branch seeds;
    the empirical mean of exp(-<phi, X_t>) over the branch replicates is
    compared with the solver functional on the same path within three
    standard errors plus a relative discretization margin.

    The pooled rows average the solver functional over ``solver_seeds``
    (default: the conditional seed set) and compare against a particle
    estimate built on freshly derived noise seeds, so the two sides share no
    random numbers; their errors combine in quadrature with the particle
    side cluster-robust over its noise paths.

    With ``variance_signature`` on, an extra row checks that replicates
    sharing a path scatter strictly less than replicates that each draw
    their own, which is the footprint of a common environment and vanishes
    when the transport kernel is zero.

    ``noise_paths`` substitutes pre-built paths (for example imported from
    disk) for the sampled conditional clusters; each path must live on the
    grid this experiment would have sampled on.
    """
    branch_seeds = [int(s) for s in branch_seeds]
    if len(branch_seeds) < 2:
        raise InsufficientReplicates("need at least 2 branch seeds")
    initial = law.theta * mu.total_mass
    if initial < MIN_INITIAL_PARTICLES:
        raise ValueError(
            f"initial population theta*<1,mu> = {initial:.1f} is below "
            f"{MIN_INITIAL_PARTICLES}; raise theta or the initial mass")

    noise_grid = matched_noise_grid(grid, t)
    if noise_paths is not None:
        for p in noise_paths:
            g = p.grid
            if (g.dt, g.dy, g.half_width) != (noise_grid.dt, noise_grid.dy,
                                              noise_grid.half_width) or g.t1 < t:
                raise ValueError("supplied noise path does not live on the "
                                 "grid this experiment runs on")
        clusters = [(p.seed if p.seed is not None else 1_000_000 + i, p)
                    for i, p in enumerate(noise_paths)]
    else:
        clusters = [(int(s), None) for s in noise_seeds]
    noise_seeds = [s for s, _ in clusters]

    report = ExperimentReport(experiment="duality")
    hits = 0
    steps = 0
    solver_cache: dict[int, list[float]] = {}

    def solver_values(seed: int, path: NoisePath | None = None) -> list[float]:
        if seed not in solver_cache:
            if path is None:
                path = sample_path(noise_grid, seed)
            solver_cache[seed] = [clf(model, mu, m, phi, path, t, grid) for phi in phis]
        return solver_cache[seed]

    cond_values: dict[int, np.ndarray] = {}
    for seed, path in clusters:
        if path is None:
            path = sample_path(noise_grid, seed)
        predicted = solver_values(seed, path)
        values, h, st = _laplace_battery(model, law, mu, m, t, path, phis,
                                         branch_seeds, lanes)
        cond_values[seed] = values
        hits += h
        steps += st
        for j in range(len(phis)):
            mean = float(values[:, j].mean())
            se = float(values[:, j].std(ddof=1) / math.sqrt(values.shape[0]))
            tol = 3.0 * se + margin * abs(predicted[j])
            report.add_row(f"conditional[noise={seed},phi={j}]",
                           predicted[j], mean, se, tol)

    if pooled and len(noise_seeds) >= 2:
        pool_values: dict[int, np.ndarray] = {}
        for seed in noise_seeds:
            fresh = derived_seed(seed, _POOL_TAG)
            path = sample_path(noise_grid, fresh)
            # Branch seeds are re-derived per cluster: sharing them across
            # clusters would correlate the cluster means and starve the
            # cluster-robust standard error.
            cluster_branch = [derived_seed(seed, _POOL_TAG, b) for b in branch_seeds]
            values, h, st = _laplace_battery(model, law, mu, m, t, path, phis,
                                             cluster_branch, lanes)
            pool_values[seed] = values
            hits += h
            steps += st
        all_solver = noise_seeds if solver_seeds is None else [int(s) for s in solver_seeds]
        for j in range(len(phis)):
            svals = np.array([solver_values(s)[j] for s in all_solver])
            s_mean = float(svals.mean())
            s_se = float(svals.std(ddof=1) / math.sqrt(svals.size)) if svals.size > 1 else 0.0
            cluster_means = np.array([pool_values[s][:, j].mean() for s in noise_seeds])
            p_mean = float(cluster_means.mean())
            p_se = float(cluster_means.std(ddof=1) / math.sqrt(cluster_means.size))
            combined = math.hypot(s_se, p_se)
            report.add_row(f"pooled[phi={j}]", s_mean, p_mean, combined, 3.0 * combined)
    elif pooled:
        report.diagnostics["pooled"] = "skipped: need at least 2 noise seeds"

    if variance_signature:
        phi0 = phis[0]
        within = np.array([cond_values[s][:, 0].var(ddof=1) for s in noise_seeds])
        shared_var = float(within.mean())
        shared_se = 0.0
        if within.size > 1:
            shared_se = float(within.std(ddof=1) / math.sqrt(within.size))
        groups = []
        for seed in noise_seeds:
            pairs = [(derived_seed(seed, _RESAMPLE_TAG, b), b) for b in branch_seeds]
            chunks = _split_chunks(pairs, lanes)
            args = [(model, law, mu, m, t, noise_grid, c, phi0) for c in chunks]
            vals = np.concatenate(_run_ordered(_resampled_chunk, args, lanes))
            groups.append(vals.var(ddof=1))
        resampled_var = float(np.mean(groups))
        report.rows.append(ReportRow(
            name="variance-signature", predicted=resampled_var,
            estimated=shared_var, se=shared_se,
            passed=bool(shared_var < resampled_var), gated=True))

    report.diagnostics["boundary_hits"] = hits
    report.diagnostics["particle_steps"] = steps
    report.diagnostics["boundary_fraction"] = hits / steps if steps else 0.0
    return report


def moment_experiment(model: Model, law: BranchingLaw, mu: Measure, m: Measure,
                      t_points, replicates: int, seed: int, *,
                      dt: float = 1e-3) -> ExperimentReport:
    """Mean total mass against the constant-kill-rate closed form.

    The prediction uses the drift the law itself encodes, gamma times one
    minus the mean litter size, so a near-critical family is compared with
    exactly the rate it was built for.  Total mass cannot feel positions
    when the law is location-free, which lets the replicate block run
    through the vectorized count simulator.
    """
    if replicates < 2:
        raise InsufficientReplicates("need at least 2 replicates")
    if not law.is_constant:
        raise ValueError("mean-mass comparison needs a location-independent law")
    t_points = [float(t) for t in t_points]
    horizon = max(t_points)
    _, masses = simulate_mass_only(law, mu.total_mass, m.total_mass,
                                   horizon, dt, replicates, seed)
    rate = law.gamma * (1.0 - float(law.mean_offspring(0.0)[0]))

    report = ExperimentReport(experiment="moment")
    report.diagnostics["kill_rate"] = rate
    for t in t_points:
        idx = int(round(t / dt))
        if abs(idx * dt - t) > 1e-9 * max(1.0, t):
            raise OffGridTime(f"t = {t} is not a multiple of dt = {dt}")
        if abs(rate) < 1e-14:
            predicted = mu.total_mass + t * m.total_mass
        else:
            decay = math.exp(-rate * t)
            predicted = decay * mu.total_mass + m.total_mass * (1.0 - decay) / rate
        col = masses[:, idx]
        mean = float(col.mean())
        se = float(col.std(ddof=1) / math.sqrt(replicates))
        report.add_row(f"mean-mass[t={t:g}]", predicted, mean, se, 3.0 * se)
    return report


def _variance_se(values: np.ndarray) -> float:
    """Standard error of the sample variance from the fourth central moment."""
    n = values.size
    dev = values - values.mean()
    m2 = float(np.mean(dev ** 2))
    m4 = float(np.mean(dev ** 4))
    inner = m4 - m2 ** 2 * (n - 3.0) / (n - 1.0)
    return math.sqrt(max(inner, 0.0) / n)


def qv_experiment(model: Model, law: BranchingLaw, mu: Measure, t: float,
                  replicates: int, seed: int, *, dt: float = 2e-4) -> ExperimentReport:
    """Variance of total mass against the accumulated branching activity.

    Immigration is off.  Replicates advance in fixed-size blocks to bound
    memory; the per-replicate reductions (final mass and the discounted time
    integral of mass) concatenate in block order, so the block size stays
    invisible in the results.  Rows: the variance against the law's jump
    activity times the kill-discounted integral of mass, which is an exact
    identity for every constant law, and, when the law is critical, against
    the closed form sigma * t * <1, mu> of the limiting model.
    """
    if replicates < 2:
        raise InsufficientReplicates("need at least 2 replicates")
    if not law.is_constant:
        raise ValueError("mass-variance comparison needs a location-independent law")
    if model.sigma.kind not in ("constant",):
        raise ValueError("mass-variance comparison needs constant sigma")
    sigma_bar = float(model.sigma(0.0))
    rate = law.gamma * (1.0 - float(law.mean_offspring(0.0)[0]))
    activity = law.gamma * float(law.spread(0.0)[0]) / law.theta

    finals = []
    integrals = []
    done = 0
    block = 0
    while done < replicates:
        n = min(_MASS_CHUNK, replicates - done)
        block_seed = derived_seed(seed, _CHUNK_TAG, block)
        times, masses = simulate_mass_only(law, mu.total_mass, 0.0, t, dt, n, block_seed)
        discount = np.exp(-2.0 * rate * (t - times))
        finals.append(masses[:, -1].copy())
        integrals.append(np.trapezoid(masses * discount[None, :], dx=dt, axis=1))
        done += n
        block += 1
    final = np.concatenate(finals)
    integral = np.concatenate(integrals)

    est_var = float(final.var(ddof=1))
    se_var = _variance_se(final)
    int_mean = float(integral.mean())
    int_se = float(integral.std(ddof=1) / math.sqrt(integral.size))

    report = ExperimentReport(experiment="qv")
    report.diagnostics["kill_rate"] = rate
    report.diagnostics["activity_rate"] = activity

    predicted = activity * int_mean
    combined = math.hypot(se_var, activity * int_se)
    report.add_row("variance-vs-activity", predicted, est_var, combined, 3.0 * combined)
    if abs(rate) < 1e-12:
        closed = sigma_bar * t * mu.total_mass
        report.add_row("variance-closed-form", closed, est_var, se_var, 3.0 * se_var)
    return report


def ergodic_experiment(model: Model, m: Measure, lambdas, t_ladder, noise_seeds,
                       grid: SolverGrid, *, eps: float | None = None,
                       cauchy_safety: float = 1.5) -> ExperimentReport:
    """Long-run Laplace functional of the immigration flow.

    For each level lambda the forward field starts from the constant lambda
    and L(t) = E exp{-int_0^t <field_s, m> ds} is averaged over noise seeds.
    Rows check that consecutive ladder differences decay at least like
    exp(-eps t) with eps the kill-rate floor, that L(t) is non-increasing,
    and, for constant sigma and b, that L at the ladder top matches the
    stationary closed form (1 + sigma*lambda/(2b))^(-2<1,m>/sigma) within
    one percent.
    """
    floor = model.b0
    if eps is None:
        eps = floor
    if floor < eps or floor <= 0.0:
        raise HypothesisViolated(
            f"kill rate must stay above a positive floor; inf b = {floor:.3g}, "
            f"required >= {eps:.3g}")
    lambdas = [float(v) for v in lambdas]
    t_ladder = [float(v) for v in t_ladder]
    if sorted(t_ladder) != t_ladder or len(set(t_ladder)) != len(t_ladder):
        raise ValueError("time ladder must be strictly increasing")
    if len(t_ladder) < 2:
        raise ValueError("time ladder needs at least 2 rungs")
    noise_seeds = [int(s) for s in noise_seeds]
    horizon = t_ladder[-1]
    noise_grid = matched_noise_grid(grid, horizon)
    xs = grid.xs()
    constant_coeffs = model.sigma.kind == "constant" and model.b.kind == "constant"

    report = ExperimentReport(experiment="ergodic")
    for lam in lambdas:
        phi = constant(lam)
        per_seed = np.empty((len(noise_seeds), len(t_ladder)))
        for i, seed in enumerate(noise_seeds):
            path = sample_path(noise_grid, seed)
            fp = solve_forward(model, phi, path, grid, horizon)
            inner = np.array([m.pair_grid(xs, row) for row in fp.snapshots])
            cum = cumulative_trapezoid(inner, dx=grid.dt, initial=0.0)
            for k, tk in enumerate(t_ladder):
                per_seed[i, k] = math.exp(-cum[fp.index_of(tk)])
        L = per_seed.mean(axis=0)

        if constant_coeffs:
            sigma_bar = float(model.sigma(0.0))
            b_bar = float(model.b(0.0))
            exponent = -2.0 * m.total_mass / sigma_bar
            stationary = (1.0 + sigma_bar * lam / (2.0 * b_bar)) ** exponent
            se = 0.0
            if len(noise_seeds) > 1:
                se = float(per_seed[:, -1].std(ddof=1) / math.sqrt(len(noise_seeds)))
            report.add_row(f"stationary[lambda={lam:g}]", stationary, float(L[-1]),
                           se, 0.01 * abs(stationary))

        diffs = np.abs(np.diff(L))
        anchor = cauchy_safety * float(diffs[0]) * math.exp(eps * t_ladder[0])
        for k in range(1, diffs.size):
            bound = anchor * math.exp(-eps * t_ladder[k])
            report.rows.append(ReportRow(
                name=f"cauchy[lambda={lam:g},step={k}]", predicted=bound,
                estimated=float(diffs[k]), se=0.0,
                passed=bool(diffs[k] <= bound + 1e-15), gated=True))
        worst_rise = float(np.max(np.diff(L))) if len(t_ladder) > 1 else 0.0
        report.rows.append(ReportRow(
            name=f"monotone[lambda={lam:g}]", predicted=0.0, estimated=worst_rise,
            se=0.0, passed=bool(worst_rise <= 1e-12), gated=True))
    return report


def _w1_to_density(cloud: np.ndarray, xs: np.ndarray, density: np.ndarray) -> float:
    """Order-1 transport distance between the normalized measures.

    Both sides are rescaled to probability measures before comparing their
    distribution functions, so a small stochastic mass mismatch between the
    thinned cloud and the exactly-killed density does not pollute the shape
    comparison.
    """
    density = np.clip(density, 0.0, None)
    cdf = cumulative_trapezoid(density, xs, initial=0.0)
    if cdf[-1] <= 0.0 or cloud.size == 0:
        return math.nan
    cdf = cdf / cdf[-1]
    fine = np.linspace(xs[0], xs[-1], 4 * xs.size)
    dens_cdf = np.interp(fine, xs, cdf)
    emp_cdf = np.searchsorted(np.sort(cloud), fine, side="right") / cloud.size
    return float(np.trapezoid(np.abs(emp_cdf - dens_cdf), fine))


def linear_case_experiment(model: Model, v0: Measure, path: NoisePath,
                           grid: SolverGrid, t: float, count_ladder,
                           *, seed: int = 0, reps_per_count: int = 3) -> ExperimentReport:
    """Density transport against branch-free particle clouds on one path.

    The particle side carries no offspring: each walker migrates and dies on
    an exponential clock at the constant kill rate, so its cloud is a
    thinned flow sharing the density's noise.  Rows check the exact mass
    decay of the density and that the transport distance between cloud and
    density falls along the particle-count ladder; each rung averages the
    distance over ``reps_per_count`` independent clouds to keep the ladder
    comparison out of its own sampling noise.
    """
    if model.b.kind not in ("constant", "zero"):
        raise ValueError("mass-decay check needs a constant kill rate")
    b_bar = float(model.b(0.0))
    field = solve_linear_density(model, v0, path, grid, t)
    dx = grid.dx
    mass0 = float(field.snapshots[0].sum() * dx)
    mass_t = float(field.snapshots[-1].sum() * dx)

    report = ExperimentReport(experiment="linear")
    if mass0 > 0.0:
        report.add_row("mass-decay", math.exp(-b_bar * t), mass_t / mass0, 0.0, 1e-6)
    else:
        report.add_row("mass-decay", 0.0, mass_t, 0.0, 1e-12)

    counts = [int(n) for n in count_ladder]
    if counts and v0.total_mass > 0.0:
        xs = grid.xs()
        density_t = field.snapshots[-1]
        w1 = []
        for pos, n in enumerate(counts):
            theta = n / v0.total_mass
            law = pure_death(theta, b_bar)
            dists = []
            for r in range(max(1, reps_per_count)):
                mp = simulate(model, law, v0, Measure.zero(), t, path,
                              derived_seed(seed, _LADDER_TAG, pos, r))
                dists.append(_w1_to_density(mp.cloud_at(t), xs, density_t))
            dist = float(np.mean(dists))
            w1.append(dist)
            report.add_row(f"w1[n={n}]", 0.0, dist, 0.0, math.inf, gated=False)
        for a, bn, da, db in zip(counts, counts[1:], w1, w1[1:]):
            ratio = db / da if da > 0 else math.nan
            report.add_row(f"w1-ratio[{a}->{bn}]", 0.5, ratio, 0.0, math.inf,
                           gated=False)
        worst = max(db - da for da, db in zip(w1, w1[1:])) if len(w1) > 1 else -1.0
        report.rows.append(ReportRow(
            name="w1-monotone", predicted=0.0, estimated=float(worst), se=0.0,
            passed=bool(worst < 0.0), gated=True))
    return report


def z_fraction(reports, threshold: float = 3.0) -> float:
    """Fraction of statistical rows (se > 0) whose |z| exceeds the threshold."""
    zs = [abs(r.z) for rep in reports for r in rep.rows if r.se > 0.0]
    if not zs:
        return 0.0
    return float(np.mean([z > threshold for z in zs]))
