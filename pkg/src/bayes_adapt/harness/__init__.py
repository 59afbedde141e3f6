from .bundle import Bundle, load_bundle, prior_file, save_bundle
from .plan import METHOD_GROUPS, METHOD_SPECS, Cell, ExperimentPlan, Method, MethodSpec, Setting
from .report import relative_improvement, report, summarize, win_counts
from .results import COLUMNS, ResultTable
from .runner import (
    SeedContext,
    build_seed_context,
    harvest_prior,
    run_cell,
    run_plan,
    train_base_network,
)

__all__ = [
    "Bundle", "load_bundle", "prior_file", "save_bundle", "METHOD_GROUPS", "METHOD_SPECS", "Cell",
    "ExperimentPlan", "Method", "MethodSpec", "Setting", "relative_improvement", "report",
    "summarize", "win_counts", "COLUMNS", "ResultTable", "SeedContext", "build_seed_context",
    "harvest_prior", "run_cell", "run_plan", "train_base_network",
]
