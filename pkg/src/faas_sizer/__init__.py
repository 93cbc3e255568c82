"""Serverless function sizing middleware.

A library for finding per-function memory sizes that meet developer quality
goals: sample a system under configuration through a deterministic FaaS
simulator, fit per-function quality models, and search the configuration
space — with the run-reducing tactics exposed as toggles and an evaluation
harness for the accuracy/cost/time of the method itself.
"""

from .core import (
    Bound,
    CapExceededError,
    CompositionSpec,
    FunctionRef,
    FunctionSpec,
    GoalSpec,
    InfeasibleError,
    KnobKind,
    KnobSpec,
    Parallel,
    PlatformError,
    Policy,
    QualityKind,
    Sample,
    SchemaError,
    Sequence,
    SizerError,
    Switch,
    SystemUnderConfiguration,
    TelemetryRecord,
    ValidationError,
    ValidationResult,
    config_space_size,
    enumerate_policies,
    uniform_policy,
    validate_goal,
)
from .evaluation import EvaluationReport, measure, optimal_policy, run_tactic_matrix
from .experiment import (
    ExperimentReport,
    PlanMode,
    SamplingPlan,
    TacticConfig,
    ThrottleAbortError,
    execute_plan,
    monotonic_prune_sweep,
    plan_max_spacing,
    skip_constant_knobs,
)
from .modeling import (
    ConcurrentWriteError,
    CostParams,
    ModelKey,
    ModelStore,
    QualityModel,
    fit_exponential_decay,
    get_or_build_model,
    predict,
)
from .simulator import (
    Deployment,
    GroundTruth,
    GroundTruthEntry,
    PlatformConfig,
    SimulatedPlatform,
    uniform_ground_truth,
)
from .sizing import (
    AnnealSchedule,
    SizingRequest,
    SizingResult,
    aggregate_composition,
    anneal_match,
    brute_force_match,
    choose_from_sweep,
    filter_bounds,
    run_sizing,
    zf_score,
)
from .workload import (
    Event,
    WorkloadClass,
    WorkloadModel,
    generate_events,
    run_composition,
    validate_and_filter,
)

__version__ = "0.1.0"
