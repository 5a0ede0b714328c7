"""Replication-factor control: transition estimation, occupancy LP, strategy structure."""
from __future__ import annotations

from .cmdp import (MixtureReport, OccupancyMeasure, ReplicationStrategy, StationaryError,
                   SystemCmdp, build_lp, check_thm2_assumptions, estimate_fS, extract_strategy,
                   induced_chain, solve_cmdp, stationary_availability, stationary_distribution,
                   stationary_node_pool, synthetic_cmdp, verify_threshold_mixture)
from .simplex import InfeasibleError, LinearProgram, LPSolution, UnboundedError, solve_lp

__all__ = [
    "InfeasibleError", "LPSolution", "LinearProgram", "MixtureReport", "OccupancyMeasure",
    "ReplicationStrategy", "StationaryError", "SystemCmdp", "UnboundedError", "build_lp",
    "check_thm2_assumptions", "estimate_fS", "extract_strategy", "induced_chain", "solve_cmdp",
    "solve_lp", "stationary_availability", "stationary_distribution", "stationary_node_pool",
    "synthetic_cmdp", "verify_threshold_mixture",
]
