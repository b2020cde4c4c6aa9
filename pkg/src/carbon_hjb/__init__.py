"""Singular stochastic control of carbon-emission reduction.

Penalty and gradient-projection solvers for the HJB variational inequality,
free-boundary extraction and Monte Carlo policy verification.
"""

from carbon_hjb.model import ModelParams, PenaltyConfig, BoundConstants, validate_params
from carbon_hjb.grid import GridSpec, Grid, ValueSurface, build_grid, interpolate
from carbon_hjb.penalty_solver import SolverConfig, solve_penalized, solve_schedule
from carbon_hjb.obstacle_solver import (
    integrate_v_to_u,
    solve_u_projected,
    phi_from_u,
    cross_validate,
)
from carbon_hjb.free_boundary import FreeBoundary, extract_boundary
from carbon_hjb.policy_sim import Policy, SimReport, extract_policy, simulate_paths

__version__ = "0.1.0"

__all__ = [
    "ModelParams",
    "PenaltyConfig",
    "BoundConstants",
    "validate_params",
    "GridSpec",
    "Grid",
    "ValueSurface",
    "build_grid",
    "interpolate",
    "SolverConfig",
    "solve_penalized",
    "solve_schedule",
    "integrate_v_to_u",
    "solve_u_projected",
    "phi_from_u",
    "cross_validate",
    "FreeBoundary",
    "extract_boundary",
    "Policy",
    "SimReport",
    "extract_policy",
    "simulate_paths",
]
