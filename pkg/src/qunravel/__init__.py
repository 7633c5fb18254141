"""Stochastic unraveling of projector-valued open-system dynamics.

The library simulates a finite-dimensional system whose measured observable
has spectral projectors P_0..P_N: deterministically at the ensemble level
(a Lindblad-type equation whose jump operators are the projectors) and
stochastically at the single-system level (a nonlinear diffusion of pure
states driven by one Brownian channel per projector).  Individual
trajectories settle into a single spectral subspace with probabilities given
by the initial occupations, while the trajectory average reproduces the
deterministic evolution and its loss of inter-block coherence.  A companion
discrete-time model implements the same physics for repeated indirect probing
of a photon-number register.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConfigError,
    DimensionMismatch,
    DuplicateEigenvalue,
    FamilyValidationError,
    GridMismatch,
    ImpossibleOutcome,
    InsufficientSamples,
    NotASimplexPoint,
    NotComplete,
    NotIdempotent,
    NotOrthogonal,
    QunravelError,
    TooManyUndecided,
    UnresolvedRuns,
    UnstableStep,
    ZeroState,
)
from .spectral import (  # noqa: F401
    DensityMatrix,
    ProjectorFamily,
    PureState,
    dephase,
    family_from_json_dict,
    family_from_observable,
    family_to_json_dict,
    luders_residual,
    occupation,
    offdiag_block_norm,
    pair_occupation,
    validate_family,
)
from .master import (  # noqa: F401
    DensityPath,
    MasterEvolutionConfig,
    analytic_solution,
    evolve_density,
    lindblad_rhs,
)
from .noise import NOISE_ALGORITHM, NoiseSource  # noqa: F401
from .trajectory import (  # noqa: F401
    ReducedPath,
    Scheme,
    TrajectoryConfig,
    TrajectoryPath,
    diffusion_vectors,
    ito_drift,
    simulate,
    simulate_reduced,
    step,
)
from .ensemble import (  # noqa: F401
    EnsembleReport,
    born_rule_test,
    classify_all,
    h_bound_check,
    run_ensemble,
    von_neumann_check,
)
from .cavity import (  # noqa: F401
    CavityState,
    ProbeModel,
    ProbeRunRecord,
    PurificationReport,
    default_probe_model,
    outcome_probabilities,
    purification_experiment,
    run_probe_sequence,
    update_after_outcome,
)
