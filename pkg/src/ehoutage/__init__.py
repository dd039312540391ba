"""Outage-minimising power allocation for energy-harvesting transmitters."""
from .errors import (
    BracketError,
    ClassificationError,
    DomainError,
    EhOutageError,
    ParseError,
    ResolutionError,
    ResourceError,
    SearchError,
    UnsupportedError,
)
from .fading import (
    CurveClass,
    OutageCurve,
    Thresholds,
    classify,
    compute_pa,
    compute_pb,
    outage_prob,
    slope_min_pa,
    thresholds,
)
from .n1 import N1Solution, f_k_objective, solve_p3, suboptimal_onoff_n1
from .offline import (
    EhTrace,
    SegmentPlan,
    average_outage,
    next_exhaust,
    plan_p1_optimal,
    solve_p1_optimal,
    solve_p1_suboptimal,
    validate_profile,
)
from .online import EhModel, MdpValueTable, build_value_table, lookahead_policy, mdp_policy_step
from .oracle import brute_force_p1, brute_force_p3

__version__ = "0.1.0"
