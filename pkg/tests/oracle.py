"""Closed forms recomputed from scratch for the test suite.

Everything here is derived independently of the package code so the tests
compare two separate routes to the same number.  Keep this module free of
sdsmlab imports.
"""

import math


def gaussian_kernel_overlap(amplitude: float, width: float) -> float:
    """Integral of h(y)^2 dy for h(y) = amplitude * exp(-y^2 / (2 width^2)).

    The square has variance parameter width/sqrt(2), so the integral is
    amplitude^2 * width * sqrt(pi).
    """
    return amplitude ** 2 * width * math.sqrt(math.pi)


def riccati_value(phi0: float, sigma: float, b: float, t: float) -> float:
    """Spatially flat solution of psi' = -b psi - (sigma/2) psi^2 at time t."""
    if b == 0.0:
        return phi0 / (1.0 + 0.5 * sigma * phi0 * t)
    decay = math.exp(-b * t)
    return b * phi0 * decay / (b + 0.5 * sigma * phi0 * (1.0 - decay))


def riccati_time_integral(phi0: float, sigma: float, b: float, t: float) -> float:
    """Integral of the flat Riccati solution over [0, t].

    Substituting u = b + (sigma/2) phi0 (1 - e^{-bs}) turns the integrand
    into (2/sigma) u'/u, so the integral is a logarithm; the b -> 0 limit
    recovers (2/sigma) log(1 + sigma phi0 t / 2).
    """
    if b == 0.0:
        return (2.0 / sigma) * math.log(1.0 + 0.5 * sigma * phi0 * t)
    inner = (b + 0.5 * sigma * phi0 * (1.0 - math.exp(-b * t))) / b
    return (2.0 / sigma) * math.log(inner)


def mean_mass(mu_mass: float, m_mass: float, b: float, t: float) -> float:
    """Expected total mass with constant kill rate b and immigration m."""
    if b == 0.0:
        return mu_mass + t * m_mass
    decay = math.exp(-b * t)
    return decay * mu_mass + m_mass * (1.0 - decay) / b


def feller_variance(sigma: float, mu_mass: float, t: float) -> float:
    """Variance of total mass for the critical branching diffusion limit."""
    return sigma * t * mu_mass


def stationary_laplace(sigma: float, b: float, lam: float, m_mass: float) -> float:
    """Long-run Laplace functional at a flat test level lam.

    exp(-m_mass * integral of the flat field) with the integral taken to
    infinity, which the logarithmic form above gives in closed form.
    """
    return (1.0 + sigma * lam / (2.0 * b)) ** (-2.0 * m_mass / sigma)


def scaling_probabilities(k: int, sigma: float, b: float) -> tuple[float, float, float]:
    """Independent recomputation of the {0, 2, k} litter weights."""
    root = math.sqrt(k)
    sig_k = root * sigma + 1.0
    denom = 2.0 * (k - 1.0) ** 2 - k
    p2 = ((k - 1.0) ** 2 * (1.0 - b / root) - k * sig_k) / denom
    pk = (2.0 * sig_k - 1.0 + b / root) / denom
    return 1.0 - p2 - pk, p2, pk


def discrete_event_probability(gamma: float, dt: float) -> float:
    """Per-step branching probability of the exponential clock."""
    return 1.0 - math.exp(-gamma * dt)
