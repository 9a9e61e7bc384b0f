from ridepool.policies.adaptive import (
    AdapBatch,
    AdaptiveTables,
    AdapShare,
    BetaTable,
    GroupAvailTable,
    estimate_beta,
    estimate_group_avail,
    estimate_tables,
)
from ridepool.policies.base import (
    Assignment,
    ClampActivated,
    InconsistentState,
    Policy,
    RoundContext,
    Telemetry,
    sample_rule,
)
from ridepool.policies.gamma import GammaValue, gamma_fixed_point
from ridepool.policies.heuristic import EpsGreedy, GreedyPolicy, Opera1, Opera2, RandomPolicy

__all__ = [
    "AdapBatch",
    "AdapShare",
    "AdaptiveTables",
    "Assignment",
    "BetaTable",
    "ClampActivated",
    "EpsGreedy",
    "GammaValue",
    "GreedyPolicy",
    "GroupAvailTable",
    "InconsistentState",
    "Opera1",
    "Opera2",
    "Policy",
    "RandomPolicy",
    "RoundContext",
    "Telemetry",
    "estimate_beta",
    "estimate_group_avail",
    "estimate_tables",
    "gamma_fixed_point",
    "sample_rule",
]
