from .experiments import (
    adaptive_rank_run,
    convergence_sweep,
    resolve_problem,
    singular_value_dump,
)
from .reference import Reference, reference_solution
from .report import ConvergenceReport, RankHistory, RankRecord, SweepRow
from .runge import chain_orders, order_from_differences, runge_order_estimate

__all__ = [
    "ConvergenceReport",
    "RankHistory",
    "RankRecord",
    "Reference",
    "SweepRow",
    "adaptive_rank_run",
    "chain_orders",
    "convergence_sweep",
    "order_from_differences",
    "reference_solution",
    "resolve_problem",
    "runge_order_estimate",
    "singular_value_dump",
]
