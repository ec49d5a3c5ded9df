"""Safe contextual Bayesian-optimization knob tuner."""

from ._safetune import (
    CONTEXT_DIM,
    EMBEDDING_DIM,
    GpModel,
    InvalidInput,
    KnobSpace,
    NumericalError,
    SyntheticEnv,
    Tuner,
    TunerConfig,
    default_rules_json,
    embed_query,
    generate_contexts,
    run_episode,
    tokenize_sql,
)

__all__ = [
    "CONTEXT_DIM",
    "EMBEDDING_DIM",
    "GpModel",
    "InvalidInput",
    "KnobSpace",
    "NumericalError",
    "SyntheticEnv",
    "Tuner",
    "TunerConfig",
    "default_rules_json",
    "embed_query",
    "generate_contexts",
    "run_episode",
    "tokenize_sql",
]
