"""Python access to the knrl core: grouping, aggregation, training and evaluation."""

from ._knrl import (
    CheckpointError,
    ConfigError,
    GroupingError,
    aggregate,
    bounds_ok,
    compare,
    evaluate,
    form_groups,
    observation_dim,
    train,
    validate_scenario,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "GroupingError",
    "aggregate",
    "bounds_ok",
    "compare",
    "evaluate",
    "form_groups",
    "observation_dim",
    "train",
    "validate_scenario",
]
