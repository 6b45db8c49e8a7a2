"""Numerical one-point large-deviations rate functions for small-noise SDEs."""

__version__ = "0.1.0"

from .action import ActionSpec, action_gradient, continuous_action, discrete_action
from .errors import (
    ConfigurationError,
    DomainError,
    LdpError,
    NonConvergenceError,
    NumericalFailure,
    OptimizerFailure,
    StepRestrictionError,
    UnknownModelError,
)
from .harness import ConvergenceReport, fit_order, run_convergence_study, run_tail_study
from .minimize import MinimizeOptions, MinimizeResult, minimize_action, minimize_discrete_single_step
from .model import Model, ModelRegistryEntry, builtin_model, check_lipschitz
from .montecarlo import (
    SimConfig,
    TailEstimate,
    legendre_transform,
    lmgf_estimate,
    sample_terminal,
    step_theta,
    tail_probability,
)
from .path import GridPath, h1_seminorm, interpolate, refine, straight_line
from .rate import (
    RateQuery,
    rate_continuous,
    rate_discrete,
    small_time_rate,
    solve_skeleton,
    theta_skeleton,
)
