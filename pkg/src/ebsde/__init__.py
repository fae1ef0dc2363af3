"""Monte-Carlo Picard solver for ergodic BSDEs on Ornstein-Uhlenbeck state.

The package solves the fixed-point equation satisfied by the gradient of
the ergodic value function: a Gamma-randomized representation turns the
gradient into a single-draw unbiased expectation, a Picard iteration on a
centered hypercube grid turns that into a fully implementable scheme, and
diagnostics recover the ergodic cost and the value function itself.
"""

from .diagnostics import (
    ErrorRecord,
    KappaReport,
    LambdaEstimate,
    MCMethod,
    QuadratureMethod,
    error_metrics,
    fit_c1_c2,
    kappa_isotropic_bound,
    kappa_upper_bound,
    lambda_estimate,
    reconstruct_u,
    isotropic_time_infimum,
)
from .errors import (
    BranchMismatch,
    ConfigError,
    DimTooLarge,
    EbsdeError,
    FactorizationFailure,
    MarginTooLarge,
    NonConvergence,
    NonPositiveTime,
    NotHurwitz,
    QuadratureDimTooLarge,
    QuadratureFailure,
    SingularDiffusion,
)
from .grid import (
    Grid,
    GridFunction,
    hat_basis,
    interpolate,
    interpolate_many,
    load_grid_function,
    project_to_box,
    save_grid_function,
    weighted_norm,
    zero_grid_function,
)
from .oracle import QuadSpec, fixed_point_residual, phi_infinity
from .ou import (
    OuModel,
    StateWeightSample,
    build_model,
    cov_t,
    estimate_CA,
    mat_exp_neg,
    sample_state_and_weight,
)
from .picard import (
    ConstantSamples,
    Driver,
    PicardState,
    RunReport,
    SchemeConfig,
    WeightedSamples,
    mc_node_stats,
    node_update,
    picard_run,
    sample_R,
    spot_check_lipschitz_z,
)
from .problems import (
    builtin_driver_benchmark,
    builtin_driver_zero,
    isotropic_model,
    pde_identity_residual,
)
from .randomizer import (
    RandomizerConfig,
    TimeDraw,
    default_theta,
    draw_time,
    expectation_identity_check,
)
from .streams import substream
from .weights import EXPONENTIAL, POLYNOMIAL, WeightFunction

__all__ = [name for name in dir() if not name.startswith("_")]
