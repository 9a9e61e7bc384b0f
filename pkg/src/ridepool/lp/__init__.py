from ridepool.lp.build import (
    LpModel,
    build_lp,
    build_lp_batch,
    build_lp_sequential,
    build_lp_share,
    revenue_rate,
)
from ridepool.lp.mps import read_mps, write_mps
from ridepool.lp.solve import LpError, LpSolution, check_feasibility, max_violation, solve_instance, solve_lp

__all__ = [
    "LpError",
    "LpModel",
    "LpSolution",
    "build_lp",
    "build_lp_batch",
    "build_lp_sequential",
    "build_lp_share",
    "check_feasibility",
    "max_violation",
    "read_mps",
    "revenue_rate",
    "solve_instance",
    "solve_lp",
    "write_mps",
]
