"""Simulation and exact combinatorics for spatial matching markets on an interval."""

__version__ = "0.1.0"

from ._validation import PreconditionError
from .market import (
    ArrivalOrder,
    CostModel,
    DistributionSpec,
    MarketInstance,
    arrival_order,
    max_adjacent_gap,
    normalize_instance,
    read_instance_csv,
    sample_instance,
    write_instance_csv,
)
from .offline import (
    Matching,
    brute_force_match,
    diagnose_matching,
    matching_cost,
    nested_transform,
    omniscient_match,
    omniscient_match_with_penalty,
    sorted_match,
)
from .online import OnlineOutcome, greedy_match, run_online, worst_case_order
from .walk import (
    HopPmf,
    SliceDecomposition,
    WalkProfile,
    build_walk,
    enumerate_hop_distribution,
    first_return_time,
    slice_decomposition,
    slice_hop_pmf,
    tail_bound,
)
from .experiments import (
    ConfigError,
    ExperimentConfig,
    ExperimentReport,
    SupplyRule,
    balanced_closed_form,
    beat_optimal_experiment,
    estimate_mean_cost,
    first_return_stats,
    penalty_scaling_experiment,
    scaling_experiment,
)
from .estimators import GreedyMatcher, OmniscientMatcher, SortedMatcher
