"""Distributed greedy facility location on a simulated CONGEST network."""
from .distributed import DistributedResult, solve_distributed
from .instance import (
    Instance,
    InstanceError,
    Solution,
    generate_instance,
    normalize,
    read_instance,
    solution_cost,
    validate_instance,
    write_instance,
)
from .oracles import brute_force_opt, greedy_fl_sequential
from .selection import ContributionGraph, exact_expected_removals, facility_select
from .trace import Trace
from .verify import VERIFIERS, run_verifiers

__all__ = [
    "ContributionGraph",
    "DistributedResult",
    "Instance",
    "InstanceError",
    "Solution",
    "Trace",
    "VERIFIERS",
    "brute_force_opt",
    "exact_expected_removals",
    "facility_select",
    "generate_instance",
    "greedy_fl_sequential",
    "normalize",
    "read_instance",
    "run_verifiers",
    "solution_cost",
    "solve_distributed",
    "validate_instance",
    "write_instance",
]
__version__ = "0.1.0"
