"""Cache-schedule planning for iterative samplers via lexicographic minimax paths."""

from lemica.exceptions import (
    BudgetInfeasibleError,
    ContractViolation,
    DegenerateReferenceError,
    LemicaError,
    OracleTooLargeError,
    PathValidationError,
)
from lemica.experiment import ExperimentConfig, build_matrix, build_profile, sweep
from lemica.graph import ScheduleGraph, SchedulePath, build_graph, feasible_budgets, validate_path
from lemica.greedy import GreedyConfig, calibrate_threshold, greedy_schedule
from lemica.measure import (
    ErrorMatrix,
    LocalErrorProfile,
    build_error_matrix,
    build_local_profile,
    local_rel_l1,
    segment_error,
)
from lemica.planner import compare_lex, enumerate_optimal, plan_lexmin, plan_shortest
from lemica.sampler import (
    MixtureFamily,
    MixtureModel,
    NoiseSchedule,
    Trajectory,
    denoiser_output,
    reverse_step,
    run_cached,
    run_full,
)

__version__ = "0.1.0"
