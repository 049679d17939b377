"""Online primal-dual learning in episodic loop-free constrained MDPs.

The learner runs projected gradient descent over occupancy measures, with
transitions estimated through confidence sets, against projected gradient
ascent on box-truncated Lagrange multipliers.
"""
from .cmdp import (LoopFreeCmdp, OccupancyError, Trajectory, cast_loop_free, induce_occupancy,
                   induce_policy, load_cmdp, sample_trajectory, save_cmdp, t1, validate_occupancy)
from .confidence import ConfidenceState
from .dual import DualState
from .metrics import MetricsSummary, compute_metrics, fit_growth
from .polytope import (InfeasibleError, LpSolution, OccupancyPolytope, ProjectionError,
                       build_polytope, lp_maximize, max_margin, project)
from .primal import PrimalState
from .runner import RunConfig, RunTrace, build_loss, run
from .scenario import EnvironmentSpec, OracleReport, draw_episode, environment_from_dict, solve_offline

__all__ = [
    "LoopFreeCmdp", "OccupancyError", "Trajectory", "cast_loop_free", "induce_occupancy",
    "induce_policy", "load_cmdp", "sample_trajectory", "save_cmdp", "t1", "validate_occupancy",
    "ConfidenceState", "DualState", "MetricsSummary", "compute_metrics", "fit_growth",
    "InfeasibleError", "LpSolution", "OccupancyPolytope", "ProjectionError", "build_polytope",
    "lp_maximize", "max_margin", "project", "PrimalState", "RunConfig", "RunTrace", "build_loss",
    "run", "EnvironmentSpec", "OracleReport", "draw_episode", "environment_from_dict",
    "solve_offline",
]
