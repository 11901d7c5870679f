"""Co-branding market simulation: bipartite reward model, online learning,
and budget optimization over spend-level grids."""

from .graph import (
    ActionSet,
    AllocationError,
    BudgetAllocation,
    CoBrandingGraph,
    GraphError,
    action_set,
    check_diminishing_returns,
    expected_reward,
    marginal_gain,
    validate_allocation,
)
from .environment import (
    DatasetError,
    EnvironmentSpec,
    FeedbackRecord,
    HistoryDataset,
    gen_history,
    gen_synthetic_spec,
    load_counts_dataset,
    sample_round,
    truth_graph,
)
from .learner import (
    ArmStats,
    GainStats,
    LearnerError,
    LearnerState,
    baseline_graph,
    bernstein_radius,
    eps_greedy_decide,
    init_from_history,
    ucb_graph,
    update,
)
from .optimizer import (
    OracleLimitError,
    brute_force_opt,
    enumerate_seeds,
    gbo,
    gpe,
    greedy_extend,
    proportional_alloc,
)
from .harness import (
    ALPHA,
    ExperimentConfig,
    InfeasibleConfigError,
    RunResult,
    aggregate_runs,
    alpha_regret,
    derive_budget_rule,
    run_online,
    sweep_k,
)

__all__ = [name for name in dir() if not name.startswith("_")]
