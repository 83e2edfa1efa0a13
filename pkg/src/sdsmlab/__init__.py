"""Simulation laboratory for branching measure-valued processes whose
particles migrate through a shared space-time white noise, with immigration.

The package pairs two independent discretizations of the same object: a
branching particle system driven by a sampled noise path, and
finite-difference solvers for the conditional log-Laplace field on the same
path.  The harness confronts the two statistically.
"""

from .branching import BranchingLaw, binary_split, custom_law, pure_death, scaling_scheme
from .config import (
    build_law_from,
    build_measure_from,
    build_model_from,
    build_solver_grid_from,
    config_digest,
    expand_seeds,
    load_config,
    validate_config,
)
from .errors import (
    BlowUp,
    CFLViolation,
    ChecksumMismatch,
    ConfigInvalid,
    DegenerateWeights,
    FormatVersionMismatch,
    GridOverflow,
    HypothesisViolated,
    InsufficientReplicates,
    InvalidScheme,
    NegativeDensity,
    NegativePhiInput,
    NonIntegrableH,
    NonPositiveSigma,
    OffGridTime,
    PopulationExplosion,
    SdsmError,
    UnsupportedDerivative,
)
from .functions import FunctionSpec, constant, cosine_bump, gaussian_bump, tabulated, zero
from .harness import (
    derived_seed,
    duality_experiment,
    ergodic_experiment,
    linear_case_experiment,
    matched_noise_grid,
    moment_experiment,
    qv_experiment,
    z_fraction,
)
from .measures import Measure
from .model import Model, build_model, eval_coeff
from .noise import (
    NoiseGrid,
    NoisePath,
    SmoothedNoise,
    integrate,
    integrate_smoothed,
    reverse_path,
    sample_path,
    spectral_project,
    transport_field,
)
from .particles import (
    MeasurePath,
    laplace_estimate,
    simulate,
    simulate_mass_only,
)
from .reporting import EstimateCI, ExperimentReport, ReportRow
from .smoothed import WeightedCloud, mollify, solve_smoothed, weighted_particle_solve
from .solver import (
    FieldPath,
    SolverGrid,
    clf,
    read_field_binary,
    solve_backward,
    solve_forward,
    solve_linear_density,
)
from .wns import read_path, write_path

__all__ = [name for name in dir() if not name.startswith("_")]
