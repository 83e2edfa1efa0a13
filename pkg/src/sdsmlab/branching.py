"""Offspring laws for the branching particle system.

A law bundles the per-particle mass 1/theta, the branching rate gamma, and a
location-dependent offspring distribution with no single-child outcome.  The
near-critical family produced by ``scaling_scheme`` concentrates on litter
sizes {0, 2, k} and is tuned so that its mean and spread reproduce a target
drift b(x) and branching variance sigma(x) as k grows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidScheme
from .functions import FunctionSpec
from .model import DEFAULT_DOMAIN

_VALIDATION_POINTS = 2001
_PROB_SLACK = 1e-12


@dataclass(frozen=True)
class BranchingLaw:
    """Mass scale, event rate, and offspring distribution.

    counts lists the supported litter sizes.  For a location-independent law
    ``table`` holds one probability row; otherwise ``prob_fn`` maps an array
    of positions to a (n, len(counts)) matrix of probabilities.
    """

    theta: float
    gamma: float
    counts: tuple[int, ...]
    table: tuple[float, ...] | None = None
    prob_fn: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.theta <= 0 or self.gamma < 0:
            raise ValueError("need theta > 0 and gamma >= 0")
        if 1 in self.counts:
            idx = self.counts.index(1)
            if self.table is None or self.table[idx] != 0.0:
                raise ValueError("single-child outcome must have probability zero")
        if (self.table is None) == (self.prob_fn is None):
            raise ValueError("exactly one of table and prob_fn must be given")

    @property
    def is_constant(self) -> bool:
        return self.table is not None

    def prob_matrix(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.table is not None:
            return np.broadcast_to(np.asarray(self.table), (x.size, len(self.counts))).copy()
        return np.asarray(self.prob_fn(x), dtype=float)

    def mean_offspring(self, x: np.ndarray) -> np.ndarray:
        """q(x), the expected litter size at x."""
        return self.prob_matrix(x) @ np.asarray(self.counts, dtype=float)

    def spread(self, x: np.ndarray) -> np.ndarray:
        """Sum of p_i(x) (i - 1)^2, the variance-like parameter of the law."""
        ks = np.asarray(self.counts, dtype=float)
        return self.prob_matrix(x) @ (ks - 1.0) ** 2

    def sample_counts(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Litter sizes for particles at positions x, one uniform draw each."""
        x = np.asarray(x, dtype=float)
        u = rng.random(x.size)
        counts = np.asarray(self.counts)
        if self.table is not None:
            cum = np.cumsum(self.table)
            return counts[np.searchsorted(cum, u, side="right").clip(max=len(counts) - 1)]
        cum = np.cumsum(self.prob_matrix(x), axis=1)
        idx = np.sum(u[:, None] > cum, axis=1).clip(max=len(counts) - 1)
        return counts[idx]


def _check_row(x: np.ndarray, names: list[str], cols: list[np.ndarray]) -> None:
    for name, col in zip(names, cols):
        bad = np.flatnonzero((col < -_PROB_SLACK) | (col > 1.0 + _PROB_SLACK))
        if bad.size:
            j = bad[0]
            raise InvalidScheme(float(x[j]), name, float(col[j]))


def binary_split(theta: float, gamma: float) -> BranchingLaw:
    """Critical law: a particle dies or splits in two with equal probability."""
    return BranchingLaw(theta=theta, gamma=gamma, counts=(0, 2), table=(0.5, 0.5))


def pure_death(theta: float, gamma: float) -> BranchingLaw:
    """Every event removes the particle; used for independent thinning."""
    return BranchingLaw(theta=theta, gamma=gamma, counts=(0,), table=(1.0,))


def custom_law(theta: float, gamma: float, table: dict[int, float]) -> BranchingLaw:
    """Location-independent law from an explicit litter-size table."""
    counts = tuple(sorted(table))
    probs = np.array([table[k] for k in counts], dtype=float)
    _check_row(np.zeros(len(counts)), [f"p_{k}" for k in counts], list(probs[None, :].T))
    if abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError(f"probabilities sum to {probs.sum()}, expected 1")
    if table.get(1, 0.0) != 0.0:
        raise ValueError("single-child outcome must have probability zero")
    return BranchingLaw(theta=theta, gamma=gamma, counts=counts, table=tuple(probs))


@dataclass(frozen=True)
class _ScalingRows:
    """Probability rows of the near-critical {0, 2, k} family.

    A plain callable object rather than a closure so that laws built from it
    survive pickling when replicates fan out across worker processes.
    """

    k: int
    sigma: FunctionSpec
    b: FunctionSpec

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        k = self.k
        root = np.sqrt(float(k))
        denom = 2.0 * (k - 1.0) ** 2 - k
        sig_k = root * self.sigma(x) + 1.0
        drift = self.b(x) / root
        p2 = ((k - 1.0) ** 2 * (1.0 - drift) - k * sig_k) / denom
        pk = (2.0 * sig_k - 1.0 + drift) / denom
        p0 = 1.0 - p2 - pk
        return np.stack([p0, p2, pk], axis=-1)


def scaling_scheme(k: int, sigma: FunctionSpec, b: FunctionSpec,
                   domain: float = DEFAULT_DOMAIN) -> BranchingLaw:
    """Near-critical {0, 2, k} law with mass 1/k and rate sqrt(k).

    With sigma_k(x) = sqrt(k) sigma(x) + 1 and D = 2(k-1)^2 - k the weights

        p_2 = ((k-1)^2 (1 - b/sqrt(k)) - k sigma_k) / D
        p_k = (2 sigma_k - 1 + b/sqrt(k)) / D
        p_0 = 1 - p_2 - p_k

    satisfy gamma (1 - q(x)) = b(x) and 2 p_2 + k p_k = 1 - b(x)/sqrt(k)
    identically, so the drift is matched exactly at every k while the
    variance parameter is matched in the k -> infinity limit.
    """
    if k < 2:
        raise ValueError("need k >= 2")
    k = int(k)
    root = np.sqrt(float(k))
    rows = _ScalingRows(k=k, sigma=sigma, b=b)

    xs = np.linspace(-domain, domain, _VALIDATION_POINTS)
    probs = rows(xs)
    _check_row(xs, ["p_0", "p_2", f"p_{k}"], [probs[:, 0], probs[:, 1], probs[:, 2]])
    if sigma.kind in ("constant", "zero") and b.kind in ("constant", "zero"):
        # Location-free coefficients collapse to a single table row, which
        # both unlocks the vectorized mass-only simulator and skips the
        # per-step probability evaluation in the spatial one.
        return BranchingLaw(theta=float(k), gamma=root, counts=(0, 2, k),
                            table=tuple(float(p) for p in probs[0]))
    return BranchingLaw(theta=float(k), gamma=root, counts=(0, 2, k), prob_fn=rows)
