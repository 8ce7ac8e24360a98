"""Staged Bayesian-optimization auto-tuning for decentralized PID control.

A simulated 6-DOF underwater vehicle is tuned either in one 18-dimensional
search or as a sequence of six 3-dimensional subtasks; the package provides
the plant, the control law, episode simulation, tracking-cost metrics, the
GP surrogate and BO loop, the staged decomposition, and the benchmark
harness plus CLI that compare the two approaches.
"""

from .bo import BoConfig, BoTrace, expected_improvement, initial_design, maximize_acquisition, run_bo
from .control import ParamVector, PidState, control_step, reset
from .episode import EpisodeSpec, StepReference, Trail, WaypointReference, run_episode
from .gp import GpModel, SquaredExponentialKernel, fit_hyperparameters, log_marginal_likelihood, posterior
from .harness import BenchmarkSpec, ComparisonReport, build_benchmark, compare, evaluate_final
from .metrics import ObjectiveSpec, compress, etx_iae, iae
from .multistage import (
    PipelineSpec,
    StageSpec,
    TuneReport,
    budget_accounting,
    embed_params,
    reduce_params,
    run_pipeline,
    solve_stage,
)
from .plant import AuvPlant, IntegratorConfig, KinematicSingularityError, NumericDomainError, SystemModel

__version__ = "0.1.0"
