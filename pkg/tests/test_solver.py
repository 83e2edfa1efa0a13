import math

import numpy as np
import pytest

from sdsmlab import (
    Measure,
    NoiseGrid,
    SolverGrid,
    build_model,
    clf,
    constant,
    gaussian_bump,
    sample_path,
    solve_backward,
    solve_forward,
    zero,
)
from sdsmlab.errors import (
    BlowUp,
    CFLViolation,
    ChecksumMismatch,
    FormatVersionMismatch,
    NegativePhiInput,
)
from sdsmlab.solver import read_field_binary

import oracle


def flat_model(b=0.0, sigma=1.0):
    return build_model(c=zero(), h=zero(),
                       sigma=constant(sigma),
                       b=constant(b) if b else zero())


def noise_on(dt, t1=1.0, half_width=8.0, dy=0.25, seed=0):
    return sample_path(NoiseGrid(t1=t1, dt=dt, half_width=half_width, dy=dy), seed)


def test_constant_coefficients_reproduce_the_riccati_solution_without_kill():
    model = flat_model(b=0.0, sigma=1.0)
    grid = SolverGrid(half_width=8.0, dx=0.25, dt=1e-3)
    field = solve_forward(model, constant(1.0), noise_on(1e-3), grid, 1.0)
    target = oracle.riccati_value(1.0, 1.0, 0.0, 1.0)
    np.testing.assert_allclose(field.final, target, rtol=1e-3)
    spread = field.final.max() - field.final.min()
    assert spread < 1e-10      # flat data stays flat under zero-Neumann walls


def test_constant_coefficients_reproduce_the_riccati_solution_with_kill():
    model = flat_model(b=0.4, sigma=1.5)
    grid = SolverGrid(half_width=8.0, dx=0.25, dt=1e-3)
    field = solve_forward(model, constant(0.8), noise_on(1e-3), grid, 1.0)
    target = oracle.riccati_value(0.8, 1.5, 0.4, 1.0)
    np.testing.assert_allclose(field.final, target, rtol=1e-3)


def test_forward_solution_decays_no_slower_than_the_kill_rate_floor():
    model = build_model(c=constant(0.2), h=gaussian_bump(0.5, width=1.0),
                        sigma=constant(1.0), b=constant(0.3))
    grid = SolverGrid(half_width=8.0, dx=0.05, dt=2e-3)
    phi = gaussian_bump(1.0, width=0.8)
    for seed in range(4):
        field = solve_forward(model, phi, noise_on(2e-3, half_width=8.0, seed=seed),
                              grid, 1.0)
        for t in (0.25, 0.5, 1.0):
            bound = math.exp(-0.3 * t) * 1.0 * 1.01
            assert field.at_time(t).max() <= bound


def test_larger_initial_data_stays_larger_pointwise():
    model = build_model(c=constant(0.2), h=gaussian_bump(0.5, width=1.0),
                        sigma=constant(1.0), b=constant(0.1))
    grid = SolverGrid(half_width=8.0, dx=0.05, dt=2e-3)
    path = noise_on(2e-3, seed=5)
    small = solve_forward(model, gaussian_bump(0.5, width=0.8), path, grid, 0.5)
    large = solve_forward(model, gaussian_bump(1.0, width=0.8), path, grid, 0.5)
    assert np.all(large.snapshots >= small.snapshots - 1e-9)


def test_backward_field_ends_at_the_terminal_data():
    model = flat_model(b=0.2)
    grid = SolverGrid(half_width=8.0, dx=0.25, dt=0.01)
    phi = gaussian_bump(1.0, width=1.0)
    field = solve_backward(model, phi, 0.0, 0.5, noise_on(0.01, t1=0.5), grid)
    np.testing.assert_allclose(field.at_time(0.5), phi(grid.xs()), atol=1e-12)
    assert field.direction == "backward"
    assert field.anchor == 0.5


def test_backward_field_with_degenerate_window_is_the_terminal_data():
    model = flat_model()
    grid = SolverGrid(half_width=8.0, dx=0.25, dt=0.01)
    field = solve_backward(model, constant(0.7), 0.3, 0.3, noise_on(0.01), grid)
    assert field.snapshots.shape[0] == 1
    np.testing.assert_array_equal(field.final, np.full(grid.nx, 0.7))


def test_backward_equals_forward_when_the_noise_does_not_enter():
    # Without shared noise the equation is autonomous, so the backward field
    # at time s is the forward solution run for t - s.
    model = flat_model(b=0.3, sigma=1.0)
    grid = SolverGrid(half_width=8.0, dx=0.25, dt=0.005)
    phi = gaussian_bump(1.0, width=1.2)
    path = noise_on(0.005, t1=0.5)
    back = solve_backward(model, phi, 0.0, 0.5, path, grid)
    forward = solve_forward(model, phi, path, grid, 0.5)
    np.testing.assert_allclose(back.snapshots[0], forward.final, atol=1e-10)
    np.testing.assert_allclose(back.snapshots[::-1], forward.snapshots, atol=1e-10)


def test_conditional_laplace_matches_the_riccati_closed_form():
    model = flat_model(b=0.0, sigma=1.0)
    grid = SolverGrid(half_width=8.0, dx=0.25, dt=1e-3)
    mu = Measure.uniform(-4.0, 4.0, 2.0)
    m = Measure.uniform(-4.0, 4.0, 0.5)
    value = clf(model, mu, m, constant(1.0), noise_on(1e-3, t1=0.5), 0.5, grid)
    expected = math.exp(
        -oracle.riccati_value(1.0, 1.0, 0.0, 0.5) * 2.0
        - oracle.riccati_time_integral(1.0, 1.0, 0.0, 0.5) * 0.5
    )
    np.testing.assert_allclose(value, expected, rtol=1e-3)


def test_conditional_laplace_with_kill_matches_the_riccati_closed_form():
    model = flat_model(b=0.6, sigma=2.0)
    grid = SolverGrid(half_width=8.0, dx=0.25, dt=1e-3)
    mu = Measure.uniform(-4.0, 4.0, 1.0)
    m = Measure.uniform(-4.0, 4.0, 1.0)
    value = clf(model, mu, m, constant(0.9), noise_on(1e-3, t1=0.5), 0.5, grid)
    expected = math.exp(
        -oracle.riccati_value(0.9, 2.0, 0.6, 0.5) * 1.0
        - oracle.riccati_time_integral(0.9, 2.0, 0.6, 0.5) * 1.0
    )
    np.testing.assert_allclose(value, expected, rtol=1e-3)


def test_negative_initial_data_is_rejected():
    model = flat_model()
    grid = SolverGrid(half_width=8.0, dx=0.25, dt=0.01)
    with pytest.raises(NegativePhiInput):
        solve_forward(model, constant(-0.5), noise_on(0.01), grid, 0.1)


def test_explicit_scheme_enforces_the_diffusion_step_bound():
    model = build_model(c=constant(1.0), h=zero(), sigma=constant(1.0), b=zero())
    grid = SolverGrid(half_width=8.0, dx=0.25, dt=0.1, scheme="explicit")
    with pytest.raises(CFLViolation):
        solve_forward(model, constant(1.0), noise_on(0.1), grid, 0.5)


def test_transport_energy_bound_rejects_coarse_grids_for_strong_kernels():
    model = build_model(c=zero(), h=gaussian_bump(4.0, width=1.0), sigma=constant(1.0),
                        b=zero())
    grid = SolverGrid(half_width=8.0, dx=0.05, dt=0.05)
    with pytest.raises(CFLViolation):
        solve_forward(model, constant(1.0), noise_on(0.05), grid, 0.5)


def test_runaway_growth_trips_the_blow_up_guard():
    model = build_model(c=zero(), h=zero(), sigma=constant(1e-6), b=constant(-30.0))
    grid = SolverGrid(half_width=8.0, dx=0.25, dt=0.01)
    with pytest.raises(BlowUp):
        solve_forward(model, constant(1.0), noise_on(0.01, t1=2.0), grid, 2.0)


def test_solver_grid_must_refine_the_noise_grid():
    grid = SolverGrid(half_width=8.0, dx=0.25, dt=0.03)
    with pytest.raises(ValueError):
        grid.refinement_of(NoiseGrid(t1=1.0, dt=0.02, half_width=8.0, dy=0.25))
    with pytest.raises(ValueError):
        grid.refinement_of(NoiseGrid(t1=1.0, dt=0.03, half_width=4.0, dy=0.25))
    assert SolverGrid(half_width=8.0, dx=0.25, dt=0.01).refinement_of(
        NoiseGrid(t1=1.0, dt=0.02, half_width=8.0, dy=0.25)) == 2


def test_field_csv_round_trips_through_float_repr():
    model = flat_model(b=0.3)
    grid = SolverGrid(half_width=2.0, dx=0.25, dt=0.05)
    field = solve_forward(model, gaussian_bump(1.0, 0.8),
                          noise_on(0.05, t1=0.2, half_width=2.0), grid, 0.2)
    lines = field.to_csv().strip().split("\n")
    assert len(lines) == field.snapshots.shape[0] + 1
    cells = [float(v) for v in lines[-1].split(",")]
    assert cells[0] == pytest.approx(0.2)
    np.testing.assert_array_equal(np.array(cells[1:]), field.final)


def test_field_binary_round_trip_is_bit_exact(tmp_path):
    model = flat_model(b=0.3)
    grid = SolverGrid(half_width=2.0, dx=0.25, dt=0.05)
    field = solve_forward(model, gaussian_bump(1.0, 0.8),
                          noise_on(0.05, t1=0.2, half_width=2.0), grid, 0.2)
    target = tmp_path / "field.bin"
    field.write_binary(target)
    snaps, dt, dx, clip_count = read_field_binary(target)
    np.testing.assert_array_equal(snaps, field.snapshots)
    assert (dt, dx) == (grid.dt, grid.dx)
    assert clip_count == field.clip_count


def test_field_binary_detects_corruption(tmp_path):
    model = flat_model()
    grid = SolverGrid(half_width=2.0, dx=0.25, dt=0.05)
    field = solve_forward(model, constant(1.0),
                          noise_on(0.05, t1=0.1, half_width=2.0), grid, 0.1)
    target = tmp_path / "field.bin"
    field.write_binary(target)
    raw = bytearray(target.read_bytes())
    raw[40] ^= 0x01
    target.write_bytes(bytes(raw))
    with pytest.raises(ChecksumMismatch):
        read_field_binary(target)
    raw[:4] = b"NOPE"
    target.write_bytes(bytes(raw))
    with pytest.raises(FormatVersionMismatch):
        read_field_binary(target)
