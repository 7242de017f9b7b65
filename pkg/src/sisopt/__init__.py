"""Optimal security investments against SIS-type epidemics on dependence networks."""

from .exceptions import (
    DegenerateBudget,
    GenerationFailed,
    InfeasibleStart,
    MaxIters,
    NotConverged,
    ParseError,
    SisOptError,
    StepTooLarge,
    SubproblemFailed,
)
from .netmodel import (
    NetworkInstance,
    generate_scale_free,
    parse_instance,
    read_instance,
    serialize_instance,
    validate,
    write_instance,
)
from .sis_core import average_cost, equilibrium, residual, simulate_dynamics, stable_equilibrium_lambda0
from .mmatrix import balance, dominant_eigenvalue, in_omega, lower_sigma
from .relaxation import check_exactness, solve_pr1, solve_pr2
from .local_search import RgmConfig, reduced_gradient, rgm, scp
from .lambda_zero import min_suppression_budget, pipeline, projected_rgm, solve_pr3
from .bench import ExperimentConfig, run_experiment
from .estimators import RGM, SCP, ConvexRelaxation, Lambda0Planner, SISEquilibrium

__version__ = "0.1.0"
