"""End-to-end acceptance battery.

Each test prints one pass/fail line (visible under pytest -s) and asserts the
same condition, so the battery reads as a checklist and fails loudly.  The
heavy conditional/pooled comparison runs once and feeds two checks.
"""

import json
import math
import time

import numpy as np
import pytest

from sdsmlab import (
    Measure,
    SolverGrid,
    binary_split,
    build_model,
    constant,
    cosine_bump,
    duality_experiment,
    ergodic_experiment,
    gaussian_bump,
    linear_case_experiment,
    matched_noise_grid,
    moment_experiment,
    qv_experiment,
    sample_path,
    scaling_scheme,
    solve_backward,
    solve_forward,
    solve_smoothed,
    weighted_particle_solve,
    zero,
)
from sdsmlab.cli import EXIT_PASS, main

import oracle


def _line(ok, label, detail):
    print(f"[{'pass' if ok else 'FAIL'}] {label}: {detail}")


def motion_free(sigma, b):
    return build_model(c=zero(), h=zero(), sigma=constant(sigma), b=constant(b))


def full_model(b=0.1):
    return build_model(c=constant(0.2), h=gaussian_bump(0.5, width=1.0),
                       sigma=constant(1.0), b=constant(b))


def test_acceptance_01_constant_coefficient_closed_form():
    grid = SolverGrid(half_width=8.0, dx=0.25, dt=1e-3)
    path = sample_path(matched_noise_grid(grid, 1.0), 0)
    phi = constant(0.75)
    start = time.perf_counter()
    worst = 0.0
    for b in (0.0, 0.4):
        model = motion_free(1.0, b) if b else motion_free(1.0, 0.0)
        field = solve_forward(model, phi, path, grid, 1.0)
        expected = oracle.riccati_value(0.75, 1.0, b, 1.0)
        err = float(np.max(np.abs(field.snapshots[-1] - expected))) / expected
        worst = max(worst, err)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-3 and elapsed < 1.0
    _line(ok, "acceptance-01 riccati closed form",
          f"worst rel err {worst:.2e} (<= 1e-3), {elapsed:.2f}s (< 1s)")
    assert ok


@pytest.fixture(scope="module")
def duality_run():
    model = full_model()
    law = scaling_scheme(100, model.sigma, model.b)
    mu = Measure.uniform(-8.0, 8.0, 1.0)
    m = Measure.uniform(-2.0, 2.0, 0.5)
    phis = [constant(0.5), gaussian_bump(0.8, width=1.0), cosine_bump(1.0, width=2.0)]
    grid = SolverGrid(half_width=8.0, dx=0.05, dt=2e-3)
    start = time.perf_counter()
    report = duality_experiment(model, law, mu, m, phis, 0.5, [1, 2, 3],
                                range(2000), grid, solver_seeds=range(200))
    return report, time.perf_counter() - start


def test_acceptance_02_conditional_duality(duality_run):
    report, elapsed = duality_run
    rows = [r for r in report.rows if r.name.startswith("conditional")]
    assert len(rows) == 9
    ok = all(r.passed for r in rows) and elapsed < 600.0
    worst = max(abs(r.z) for r in rows if r.se > 0)
    _line(ok, "acceptance-02 conditional duality",
          f"9 path/field rows within 3 SE + 2%, worst |z| {worst:.2f}, "
          f"{elapsed:.0f}s (< 600s)")
    assert ok


def test_acceptance_03_unconditional_duality(duality_run):
    report, _ = duality_run
    rows = [r for r in report.rows if r.name.startswith("pooled")]
    assert len(rows) == 3
    ok = all(r.passed for r in rows)
    worst = max(abs(r.z) for r in rows if r.se > 0)
    _line(ok, "acceptance-03 unconditional duality",
          f"3 pooled rows within 3 combined SE, worst |z| {worst:.2f}")
    assert ok


def test_acceptance_04_first_moment_of_total_mass():
    model = motion_free(1.0, 1.0)
    law = scaling_scheme(100, constant(1.0), constant(1.0))
    mu = Measure.uniform(-2.0, 2.0, 1.0)
    m = Measure.uniform(-2.0, 2.0, 0.5)
    report = moment_experiment(model, law, mu, m, [0.5, 1.0, 2.0], 4000, seed=11)
    for row in report.rows:
        t = float(row.name.split("=")[1].rstrip("]"))
        assert row.predicted == pytest.approx(oracle.mean_mass(1.0, 0.5, 1.0, t))
    ok = report.all_pass
    worst = max(abs(r.z) for r in report.rows)
    _line(ok, "acceptance-04 immigration mean mass",
          f"t in (0.5, 1, 2) within 3 SE, worst |z| {worst:.2f}")
    assert ok


def test_acceptance_05_mass_variance_in_the_feller_regime():
    model = motion_free(1.0, 0.0)
    law = binary_split(100.0, 100.0)
    mu = Measure.uniform(-2.0, 2.0, 1.0)
    report = qv_experiment(model, law, mu, 1.0, 10000, seed=12)
    closed = next(r for r in report.rows if r.name == "variance-closed-form")
    assert closed.predicted == pytest.approx(oracle.feller_variance(1.0, 1.0, 1.0))
    ok = report.all_pass
    _line(ok, "acceptance-05 feller mass variance",
          f"Var<1,X_1> = {closed.estimated:.4f} vs sigma*t*<1,mu> = "
          f"{closed.predicted:.1f}, z {closed.z:+.2f} (|z| <= 3)")
    assert ok


def test_acceptance_06_exponential_decay_bound():
    model = full_model(b=0.3)
    phi = gaussian_bump(0.8, width=1.0)
    grid = SolverGrid(half_width=8.0, dx=0.05, dt=2e-3)
    violations = 0
    checks = 0
    for t in (0.5, 0.75, 1.0):
        noise_grid = matched_noise_grid(grid, t)
        for seed in range(10):
            path = sample_path(noise_grid, seed)
            for r in (0.0, 0.2, 0.4):
                back = solve_backward(model, phi, r, t, path, grid)
                bound = 1.01 * 0.8 * math.exp(-0.3 * (t - r))
                checks += 1
                if float(back.snapshots[0].max()) > bound:
                    violations += 1
    ok = violations == 0
    _line(ok, "acceptance-06 decay bound",
          f"{checks} backward fields, {violations} above 1.01*e^(-b0(t-r))*max phi")
    assert ok


def test_acceptance_07_ergodic_limit_of_the_immigration_flow():
    model = motion_free(2.0, 1.0)
    m = Measure.uniform(-2.0, 2.0, 1.0)
    grid = SolverGrid(half_width=8.0, dx=0.25, dt=2.5e-3)
    report = ergodic_experiment(model, m, [0.5, 1.0, 2.0], [5.0, 10.0, 15.0, 20.0],
                                [0], grid)
    worst = 0.0
    for lam in (0.5, 1.0, 2.0):
        row = next(r for r in report.rows if r.name == f"stationary[lambda={lam:g}]")
        assert row.predicted == pytest.approx(oracle.stationary_laplace(2.0, 1.0, lam, 1.0))
        worst = max(worst, abs(row.estimated - row.predicted) / row.predicted)
    cauchy = [r for r in report.rows if r.name.startswith("cauchy")]
    ok = report.all_pass and len(cauchy) == 6
    _line(ok, "acceptance-07 ergodic laplace limit",
          f"3 stationary values within 1% (worst {worst:.2%}), "
          f"{len(cauchy)} cauchy decay rows hold")
    assert ok


def test_acceptance_08_cross_solver_agreement():
    model = full_model()
    phi = gaussian_bump(0.5, width=1.0)
    grid = SolverGrid(half_width=8.0, dx=0.05, dt=2e-3)
    path = sample_path(matched_noise_grid(grid, 0.5), 7)
    fd = solve_smoothed(model, phi, 0.125, path, grid, 0.5)
    wp = weighted_particle_solve(model, phi, 0.125, path, 100000, 21,
                                 grid=grid, t=0.5, bandwidth=0.1)
    a = fd.snapshots[-1]
    b = wp.snapshots[-1]
    rel = math.sqrt(float(np.trapezoid((a - b) ** 2, dx=grid.dx))
                    / float(np.trapezoid(a ** 2, dx=grid.dx)))
    ok = rel <= 0.05
    _line(ok, "acceptance-08 cross-solver L2",
          f"grid vs weighted walkers rel L2 {rel:.3f} (<= 0.05) at t=0.5, n=1e5")
    assert ok


def test_acceptance_09_linear_case_mass_and_transport():
    model = full_model(b=0.5)
    grid = SolverGrid(half_width=8.0, dx=0.05, dt=5e-4)
    path = sample_path(matched_noise_grid(grid, 1.0), 17)
    xs = np.linspace(-8.0, 8.0, 321)
    v0 = Measure.density(-8.0, 8.0, np.exp(-0.5 * (xs / 1.5) ** 2))
    report = linear_case_experiment(model, v0, path, grid, 1.0,
                                    [1000, 4000, 16000], seed=19, reps_per_count=3)
    mass = next(r for r in report.rows if r.name == "mass-decay")
    monotone = next(r for r in report.rows if r.name == "w1-monotone")
    drift = abs(mass.estimated - mass.predicted)
    ok = report.all_pass and drift <= 1e-6
    _line(ok, "acceptance-09 linear case",
          f"pathwise mass drift {drift:.1e} (<= 1e-6), W1 drop along 4x ladder "
          f"{-monotone.estimated:.2e} > 0")
    assert ok


def test_acceptance_10_reports_are_deterministic(tmp_path):
    raw = {
        "experiment": "duality",
        "model": {
            "c": {"kind": "zero"},
            "h": {"kind": "zero"},
            "sigma": {"kind": "constant", "params": {"level": 1.0}},
            "b": {"kind": "zero"},
        },
        "measures": {
            "mu": {"type": "uniform", "lo": -2.0, "hi": 2.0, "mass": 1.0},
            "m": {"type": "uniform", "lo": -2.0, "hi": 2.0, "mass": 0.5},
        },
        "law": {"scheme": "binary-split", "theta": 100.0, "gamma": 100.0},
        "grids": {"solver": {"dx": 0.25, "dt": 0.01}},
        "parameters": {"t": 0.2,
                       "phis": [{"kind": "constant", "params": {"level": 0.5}}]},
        "seeds": {"master": 0, "noise": 2, "branch": 16},
        "output_dir": str(tmp_path / "out"),
    }
    config = tmp_path / "config.json"
    config.write_text(json.dumps(raw))
    codes = [
        main(["run", "--config", str(config), "--out", str(tmp_path / "a")]),
        main(["run", "--config", str(config), "--out", str(tmp_path / "b")]),
        main(["run", "--config", str(config), "--out", str(tmp_path / "c"),
              "--lanes", "2"]),
    ]
    blobs = [(tmp_path / d / "report.json").read_bytes() for d in ("a", "b", "c")]
    rows = [(tmp_path / d / "rows.csv").read_bytes() for d in ("a", "b", "c")]
    ok = (codes == [EXIT_PASS] * 3 and blobs[0] == blobs[1] == blobs[2]
          and rows[0] == rows[1] == rows[2])
    _line(ok, "acceptance-10 determinism",
          "rerun and 1-vs-2 lanes give byte-identical report.json and rows.csv")
    assert ok
