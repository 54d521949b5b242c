"""Optimal control of delay equations on the segment space: solvers, brute-force
value functions, HJB residuals, viscosity checks and doubling diagnostics."""

from .candidates import CandidateSet, build_candidates
from .comparison_harness import (
    DoublingConfig,
    QuadPoint,
    comparison_diagnostics,
    doubling_distance,
    left_maximize,
    left_maximize_quad,
    psi,
    strict_subsolution,
)
from .control_problem import CostReport, cost, hamiltonian
from .delay_dynamics import ControlSignal, ProblemSpec, Trajectory, segment_at, solve_euler, solve_picard
from .dyn_programming import dpp_residual, dpp_rhs, value_bruteforce
from .errors import (
    BlowUpError,
    BudgetExceededError,
    ConfigError,
    ConvergenceError,
    DelayHJBError,
    GridError,
)
from .generator_hjb import (
    TestFunction,
    hjb_residual,
    s_closed_b,
    s_closed_h,
    s_finite_difference,
    subsolution_check,
    supersolution_check,
)
from .problems import load_problem
from .segment_space import Segment, TimedSegment, b_norm, b_transform, concat, extend_hat, h_inner, h_norm

__version__ = "0.1.0"
