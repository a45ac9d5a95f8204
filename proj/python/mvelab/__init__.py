"""Python bindings for mvelab."""

from ._core import (
    ContractViolation,
    Env,
    bound_trial,
    canonical_config,
    config_keys,
    env_names,
    hillclimb_counterexample,
    load_metrics,
    oracle_identity_max_residual,
    policy_action,
    smooth_series,
    spearman,
    train,
)

__all__ = [
    "ContractViolation",
    "Env",
    "bound_trial",
    "canonical_config",
    "config_keys",
    "env_names",
    "hillclimb_counterexample",
    "load_metrics",
    "oracle_identity_max_residual",
    "policy_action",
    "smooth_series",
    "spearman",
    "train",
]
