"""Visual-focus advantage shaping for group-relative policy optimization.

The package turns per-token hidden states and a visual prototype into a
focus score, compensates late positions that stay focused, re-weights
group-relative advantages at both token and trajectory granularity, and
evaluates the result with a clipped surrogate. Around that core sit a
line-delimited trace format, a diagnostics toolkit, a synthetic rollout lab
with a trainable toy policy, and a command line front end.
"""

from .compensation import (
    CompensatedSeries,
    compensate,
    compensated_series,
    gate_mask,
    schedule_values,
    tail_threshold,
    window_boundary,
)
from .diagnostics import (
    SELECTORS,
    AllocationResult,
    RatioReport,
    attention_allocation,
    late_early_ratio,
    pearson,
    ratio_distribution,
)
from .errors import (
    ConfigError,
    InvalidInput,
    ParseError,
    SchemaVersionUnsupported,
    ShapingError,
    UnknownKey,
    UnknownSchedule,
    Violation,
)
from .focus import FocusSeries, cosine_sim, focus_series, pool_prototype
from .grpo import (
    AGG_MODES,
    ClipConfig,
    SurrogateResult,
    clipped_surrogate,
    group_advantages,
    importance_ratios,
)
from .model import (
    EPS_SMOOTH,
    SCHEDULES,
    SPANS,
    STD_MODES,
    RolloutGroup,
    ShapedAdvantages,
    ShapingConfig,
    Trajectory,
    VisualContext,
    validate_context,
    validate_group,
    validate_trajectory,
)
from .pipeline import resolve_prototype, shape_group
from .reweight import (
    InterFactors,
    IntraFactors,
    inter_factors,
    intra_factors,
    shape_advantages,
    trajectory_score,
)
from .synthlab import (
    ALGOS,
    SynthConfig,
    ToyBatch,
    ToyPolicy,
    batch_metrics,
    generate_group,
    rollout_batch,
    run_experiment,
    sample_token,
    toy_rollout,
    train_step,
    vocab_embeddings,
)
from .traceio import (
    SCHEMA_VERSION,
    ConfigBundle,
    default_bundle,
    read_config,
    read_trace,
    shaped_line,
    trace_line,
    write_report,
    write_trace,
)

__version__ = "0.1.0"

__all__ = [
    "AGG_MODES",
    "ALGOS",
    "AllocationResult",
    "ClipConfig",
    "CompensatedSeries",
    "ConfigBundle",
    "ConfigError",
    "EPS_SMOOTH",
    "FocusSeries",
    "InterFactors",
    "IntraFactors",
    "InvalidInput",
    "ParseError",
    "RatioReport",
    "RolloutGroup",
    "SCHEDULES",
    "SCHEMA_VERSION",
    "SELECTORS",
    "SPANS",
    "STD_MODES",
    "SchemaVersionUnsupported",
    "ShapedAdvantages",
    "ShapingConfig",
    "ShapingError",
    "SurrogateResult",
    "SynthConfig",
    "ToyBatch",
    "ToyPolicy",
    "Trajectory",
    "UnknownKey",
    "UnknownSchedule",
    "Violation",
    "VisualContext",
    "attention_allocation",
    "batch_metrics",
    "clipped_surrogate",
    "compensate",
    "compensated_series",
    "cosine_sim",
    "default_bundle",
    "focus_series",
    "gate_mask",
    "generate_group",
    "group_advantages",
    "importance_ratios",
    "inter_factors",
    "intra_factors",
    "late_early_ratio",
    "pearson",
    "pool_prototype",
    "ratio_distribution",
    "read_config",
    "read_trace",
    "resolve_prototype",
    "rollout_batch",
    "run_experiment",
    "sample_token",
    "schedule_values",
    "shape_advantages",
    "shape_group",
    "shaped_line",
    "tail_threshold",
    "toy_rollout",
    "trace_line",
    "train_step",
    "trajectory_score",
    "validate_context",
    "validate_group",
    "validate_trajectory",
    "vocab_embeddings",
    "window_boundary",
    "write_report",
    "write_trace",
]
