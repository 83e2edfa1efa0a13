"""Coefficient bundle with the derived correlation profile and total diffusion.

The correlation kernel h induces the profile rho(x) = int h(y-x) h(y) dy and
the total diffusion coefficient a(x) = c(x)^2 + rho(0).  rho is tabulated once
at build time by trapezoid convolution on a quadrature grid and interpolated
linearly afterwards; the dynamics always use h itself, rho is diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonIntegrableH, NonPositiveSigma, UnsupportedDerivative
from .functions import FunctionSpec

COEFF_NAMES = ("c", "h", "sigma", "b", "rho", "a")

_TAIL_RTOL = 1e-10
DEFAULT_DOMAIN = 8.0
DEFAULT_QUAD_POINTS = 8193


@dataclass(frozen=True)
class Model:
    """Immutable coefficient bundle; safe to share across lanes."""

    c: FunctionSpec
    h: FunctionSpec
    sigma: FunctionSpec
    b: FunctionSpec
    domain: float               # working interval is [-domain, domain]
    rho_grid: np.ndarray
    rho_values: np.ndarray
    rho0: float
    b0: float                   # inf of b over the quadrature grid
    sigma_min: float

    @property
    def is_motion_free(self) -> bool:
        """True when particles cannot move (no own noise, no common noise)."""
        return self.c.is_zero and self.h.is_zero

    def coeff(self, which: str, x, order: int = 0):
        """Vectorized coefficient evaluation; see eval_coeff for the contract."""
        if which not in COEFF_NAMES:
            raise ValueError(f"unknown coefficient {which!r}")
        if order not in (0, 1, 2):
            raise UnsupportedDerivative(f"order {order} not in {{0, 1, 2}}")
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        xv = np.atleast_1d(x)
        if which in ("c", "h", "sigma", "b"):
            out = getattr(self, which)(xv, order)
        elif which == "rho":
            if order == 2:
                raise UnsupportedDerivative("rho is tabulated; only order <= 1 supported")
            if order == 0:
                out = np.interp(xv, self.rho_grid, self.rho_values)
            else:
                slopes = np.gradient(self.rho_values, self.rho_grid)
                out = np.interp(xv, self.rho_grid, slopes)
        else:  # total diffusion a = c^2 + rho(0)
            c0 = self.c(xv, 0)
            if order == 0:
                out = c0 * c0 + self.rho0
            elif order == 1:
                out = 2.0 * c0 * self.c(xv, 1)
            else:
                c1 = self.c(xv, 1)
                out = 2.0 * (c1 * c1 + c0 * self.c(xv, 2))
        out = np.asarray(out, dtype=float)
        return float(out[0]) if scalar else out

    def a_max(self) -> float:
        xs = np.linspace(-self.domain, self.domain, 1025)
        return float(np.max(self.coeff("a", xs)))


def build_model(
    c: FunctionSpec,
    h: FunctionSpec,
    sigma: FunctionSpec,
    b: FunctionSpec,
    quad_grid: tuple[float, int] | None = None,
    domain: float = DEFAULT_DOMAIN,
) -> Model:
    """Validate the coefficients and tabulate the derived quantities.

    quad_grid is (half_width, points) for the rho quadrature; the default
    covers the working interval with a grid fine enough for the catalog
    kernels.  Raises NonPositiveSigma or NonIntegrableH on bad input.
    """
    if quad_grid is None:
        quad_grid = (domain, DEFAULT_QUAD_POINTS)
    half, points = float(quad_grid[0]), int(quad_grid[1])
    ys = np.linspace(-half, half, points)

    sig_vals = sigma(ys)
    sigma_min = float(np.min(sig_vals))
    if sigma_min <= 0:
        raise NonPositiveSigma(f"min sigma = {sigma_min:.6g} on the quadrature grid")

    h_vals = h(ys)
    rho0 = float(np.trapezoid(h_vals * h_vals, ys))

    # Tail audit: extending the window by 25% must not change rho(0).
    step = ys[1] - ys[0]
    extra = int(np.ceil(0.25 * half / step))
    ys_ext = np.concatenate([
        ys[0] - step * np.arange(extra, 0, -1),
        ys,
        ys[-1] + step * np.arange(1, extra + 1),
    ])
    h_ext = h(ys_ext)
    rho0_ext = float(np.trapezoid(h_ext * h_ext, ys_ext))
    if abs(rho0_ext - rho0) > _TAIL_RTOL * max(rho0, 1e-300):
        raise NonIntegrableH(
            f"rho(0) changes by {abs(rho0_ext - rho0):.3g} when the quadrature window grows; "
            "h does not decay inside the grid"
        )

    # rho table over the difference range, exploiting rho(x) = rho(-x).
    table_x = np.linspace(0.0, 2.0 * half, 513)
    rho_half = np.empty(table_x.size)
    for i, shift in enumerate(table_x):
        rho_half[i] = np.trapezoid(h(ys - shift) * h_vals, ys)
    rho_grid = np.concatenate([-table_x[:0:-1], table_x])
    rho_values = np.concatenate([rho_half[:0:-1], rho_half])

    b0 = float(np.min(b(ys)))

    return Model(
        c=c, h=h, sigma=sigma, b=b, domain=float(domain),
        rho_grid=rho_grid, rho_values=rho_values,
        rho0=rho0, b0=b0, sigma_min=sigma_min,
    )


def eval_coeff(model: Model, which: str, x: float, order: int = 0) -> float:
    """Evaluate one coefficient (or a derivative) at a single point.

    which is one of c | h | sigma | b | rho | a, order in {0, 1, 2}.
    Tabulated kinds (and rho) support order <= 1 only and raise
    UnsupportedDerivative above that.
    """
    return float(model.coeff(which, float(x), order))
