"""Exception types shared across the package.

Every failure mode that callers are expected to catch has its own class so
that experiment drivers and the CLI can map them to exit codes without
string-matching messages.
"""


class SdsmError(Exception):
    """Base class for all package-specific errors."""


# -- model construction ------------------------------------------------------

class NonPositiveSigma(SdsmError):
    """Branching variance coefficient is not strictly positive on the grid."""


class NonIntegrableH(SdsmError):
    """Correlation kernel h does not decay inside the quadrature window."""


class UnsupportedDerivative(SdsmError):
    """Requested derivative order not available for this coefficient kind."""


# -- noise -------------------------------------------------------------------

class GridOverflow(SdsmError):
    """Increment array would exceed the configured memory budget."""


class OffGridTime(SdsmError):
    """A time argument does not lie on the noise grid."""


# -- particle system ---------------------------------------------------------

class InvalidScheme(SdsmError):
    """Offspring probabilities fall outside [0, 1] for some location.

    Carries the offending location and which probability failed, so callers
    can report that k is too small for the requested coefficients.
    """

    def __init__(self, x: float, which_p: str, value: float):
        self.x = x
        self.which_p = which_p
        self.value = value
        super().__init__(
            f"offspring probability {which_p} = {value:.6g} out of [0, 1] at x = {x:.6g}; "
            "increase k or shrink the coefficients"
        )


class PopulationExplosion(SdsmError):
    """Live particle count exceeded the configured cap."""


# -- solvers -----------------------------------------------------------------

class CFLViolation(SdsmError):
    """Time step too large for the spatial step (deterministic or noise CFL)."""


class NegativePhiInput(SdsmError):
    """Initial or terminal data has negative values."""


class BlowUp(SdsmError):
    """Field magnitude exceeded the stability guard during stepping."""


class DegenerateWeights(SdsmError):
    """Weighted-particle cloud collapsed onto few heavy particles."""


class NegativeDensity(SdsmError):
    """Density fell below the tolerated round-off threshold."""


# -- harness / cli -----------------------------------------------------------

class InsufficientReplicates(SdsmError):
    """Too few replicates (or particles) for the requested statistics."""


class HypothesisViolated(SdsmError):
    """Experiment preconditions on the coefficients do not hold."""


class ConfigInvalid(SdsmError):
    """Experiment configuration failed schema validation."""


class FormatVersionMismatch(SdsmError):
    """Noise file has an unknown magic or version."""


class ChecksumMismatch(SdsmError):
    """Noise file payload does not match its recorded checksum."""
