import numpy as np
import pytest

from sdsmlab import build_model, constant, gaussian_bump, zero
from sdsmlab.errors import NonIntegrableH, NonPositiveSigma, UnsupportedDerivative

import oracle


def test_quadratic_variation_density_at_zero_matches_the_gaussian_overlap():
    model = build_model(c=zero(), h=gaussian_bump(0.8, width=1.3), sigma=constant(1.0),
                        b=constant(0.5))
    np.testing.assert_allclose(model.rho0, oracle.gaussian_kernel_overlap(0.8, 1.3), rtol=1e-6)


def test_total_diffusion_adds_own_noise_to_the_shared_field():
    model = build_model(c=constant(0.4), h=gaussian_bump(1.0, width=0.9),
                        sigma=constant(1.0), b=constant(0.2))
    rho0 = oracle.gaussian_kernel_overlap(1.0, 0.9)
    np.testing.assert_allclose(model.coeff("a", 0.0), 0.4**2 + rho0, rtol=1e-6)
    np.testing.assert_allclose(model.coeff("a", 3.7), 0.4**2 + rho0, rtol=1e-6)


def test_rho_table_is_symmetric_and_peaks_at_zero():
    model = build_model(c=zero(), h=gaussian_bump(1.0, width=1.0), sigma=constant(1.0),
                        b=constant(1.0))
    xs = np.linspace(0.0, 4.0, 9)
    np.testing.assert_allclose(model.coeff("rho", xs), model.coeff("rho", -xs), rtol=1e-12)
    assert model.coeff("rho", 0.0) == pytest.approx(model.rho0)
    assert np.all(model.coeff("rho", xs[1:]) < model.rho0)


def test_rho_of_a_gaussian_kernel_is_the_shifted_overlap_integral():
    # h * h(x) for a gaussian is another gaussian: rho(x) = rho(0) exp(-x^2/(4 w^2)).
    w = 1.1
    model = build_model(c=zero(), h=gaussian_bump(1.0, width=w), sigma=constant(1.0),
                        b=constant(1.0))
    xs = np.linspace(-3.0, 3.0, 13)
    expected = oracle.gaussian_kernel_overlap(1.0, w) * np.exp(-xs**2 / (4.0 * w**2))
    np.testing.assert_allclose(model.coeff("rho", xs), expected, rtol=1e-4)


def test_kill_rate_floor_is_the_minimum_over_the_grid():
    model = build_model(c=zero(), h=zero(), sigma=constant(1.0),
                        b=gaussian_bump(0.5, width=2.0))
    # The bump decays away from the center, so the floor sits at the edge x = 8.
    assert model.b0 == pytest.approx(0.5 * np.exp(-0.5 * (8.0 / 2.0) ** 2), rel=1e-9)
    flat = build_model(c=zero(), h=zero(), sigma=constant(1.0), b=constant(0.3))
    assert flat.b0 == pytest.approx(0.3)


def test_sigma_must_be_strictly_positive():
    with pytest.raises(NonPositiveSigma):
        build_model(c=zero(), h=zero(), sigma=constant(0.0), b=constant(1.0))
    with pytest.raises(NonPositiveSigma):
        build_model(c=zero(), h=zero(), sigma=constant(-1.0), b=constant(1.0))


def test_kernel_that_does_not_decay_is_rejected():
    with pytest.raises(NonIntegrableH):
        build_model(c=zero(), h=constant(0.5), sigma=constant(1.0), b=constant(1.0))


def test_motion_free_flag_requires_both_noise_channels_off():
    assert build_model(c=zero(), h=zero(), sigma=constant(1.0), b=constant(1.0)).is_motion_free
    assert not build_model(c=constant(0.1), h=zero(), sigma=constant(1.0),
                           b=constant(1.0)).is_motion_free
    assert not build_model(c=zero(), h=gaussian_bump(0.3, 1.0), sigma=constant(1.0),
                           b=constant(1.0)).is_motion_free


def test_coeff_rejects_unknown_names_and_deep_derivatives():
    model = build_model(c=zero(), h=gaussian_bump(0.5, 1.0), sigma=constant(1.0),
                        b=constant(1.0))
    with pytest.raises(ValueError):
        model.coeff("q", 0.0)
    with pytest.raises(UnsupportedDerivative):
        model.coeff("rho", 0.0, 2)
    with pytest.raises(UnsupportedDerivative):
        model.coeff("b", 0.0, 3)


def test_total_diffusion_derivative_uses_the_chain_rule():
    model = build_model(c=gaussian_bump(0.5, width=1.4), h=zero(), sigma=constant(1.0),
                        b=constant(1.0))
    x = 0.6
    step = 1e-5
    fd = (model.coeff("a", x + step) - model.coeff("a", x - step)) / (2.0 * step)
    np.testing.assert_allclose(model.coeff("a", x, 1), fd, rtol=1e-6)
