"""Gaussian asymptotics of stochastic limit-cycle oscillators.

Covariance tubes of the central limit regime, periodic Riccati curvature on
the cycle, WKB prefactor transport, stationary flux and cycle marginal,
entropy balance, Laplace-method expansions, seeded ensemble validation, and
the space-time scaling that generates the small parameter.
"""

__version__ = "0.1.0"

from .errors import (
    CheckFailure,
    ConfigError,
    NumericalFailure,
    StochcycleError,
)
from .model import (
    BUILTIN_MODELS,
    Epsilon,
    ModelSpec,
    ValidationReport,
    builtin_model,
    describe_builtin,
    make_model,
    polynomial_model,
    validate_model,
)
from .flow import (
    CycleSamples,
    LimitCycle,
    StepControl,
    Trajectory,
    find_limit_cycle,
    integrate_flow,
    project_to_cycle,
    sample_cycle,
)
from .clt import (
    GaussianTube,
    curvature_from_tube,
    propagate_gaussian,
    propagate_inverse_covariance,
    propagate_m,
    wkb_first_correction_check,
)
from .cycle import (
    CycleCurvature,
    EntropyBalanceReport,
    FrenetFrameField,
    PrefactorProfile,
    build_frame,
    conserved_quantity,
    cycle_marginal_density,
    entropy_balance,
    flux_linearization,
    product_of_nonzero_eigenvalues,
    propagate_log_prefactor,
    solve_periodic_covariance,
    transverse_variance_product,
)
from .laplace import (
    MomentTensors,
    SmoothFunctionBundle,
    gaussian_moment_4,
    gaussian_moment_6,
    laplace_integral,
    laplace_ratio,
    laplace_variance,
    laplace_weighted_ratio,
    quadrature_oracle,
)
from .montecarlo import (
    EnsembleStats,
    clt_check,
    empirical_cycle_marginal,
    simulate_ensemble,
    simulate_stationary_ensemble,
    transverse_fluctuation_check,
)
from .scaling import (
    SpaceTimeStructure,
    ito_from_stratonovich,
    monomial_drift_epsilon_power,
    monomial_scaling_exponent,
    rescale_sde,
)

__all__ = [
    "__version__",
    "StochcycleError", "ConfigError", "NumericalFailure", "CheckFailure",
    "ModelSpec", "Epsilon", "make_model", "builtin_model", "polynomial_model",
    "BUILTIN_MODELS", "describe_builtin", "validate_model", "ValidationReport",
    "Trajectory", "LimitCycle", "CycleSamples", "StepControl",
    "integrate_flow", "find_limit_cycle", "sample_cycle", "project_to_cycle",
    "GaussianTube", "propagate_gaussian", "propagate_m",
    "propagate_inverse_covariance", "curvature_from_tube",
    "wkb_first_correction_check",
    "FrenetFrameField", "CycleCurvature", "PrefactorProfile",
    "EntropyBalanceReport", "build_frame", "solve_periodic_covariance",
    "propagate_log_prefactor", "transverse_variance_product",
    "product_of_nonzero_eigenvalues",
    "flux_linearization", "conserved_quantity", "cycle_marginal_density",
    "entropy_balance",
    "SmoothFunctionBundle", "MomentTensors", "gaussian_moment_4",
    "gaussian_moment_6", "laplace_integral", "laplace_ratio",
    "laplace_weighted_ratio", "laplace_variance", "quadrature_oracle",
    "EnsembleStats", "simulate_ensemble", "simulate_stationary_ensemble",
    "clt_check", "transverse_fluctuation_check", "empirical_cycle_marginal",
    "SpaceTimeStructure", "rescale_sde", "monomial_scaling_exponent",
    "monomial_drift_epsilon_power", "ito_from_stratonovich",
]
