"""Restless linear bandits driven by stationary phi-mixing parameter sequences."""
from .errors import NumericalError, SpecError
from .estimator import (
    ConfidenceEllipsoid,
    RlsState,
    absorb,
    block_length,
    build_ellipsoid,
    confidence_radius,
    estimate,
)
from .harness import (
    ExperimentConfig,
    RunResult,
    coverage_report,
    infinite_regret_envelope,
    prop1_check,
    regret_envelope,
    run_experiment,
    theta_star,
)
from .optimizer import OptimisticSolution, solve_optimistic
from .policy import (
    PolicyConfig,
    Trajectory,
    n_zero,
    run_everystep_ucb,
    run_finite,
    run_fixed_oracle,
    run_infinite,
)
from .process import (
    Environment,
    MixingProfile,
    ProcessSpec,
    ProcessState,
    fit_envelope,
    phi_coefficient,
    sample_theta,
    start,
    stationary_distribution,
    symmetric_chain,
)

__version__ = "0.1.0"
