from ._core import (
    ConfigError,
    IoError,
    Model,
    NumericalError,
    ShapeError,
    default_config,
    drop_frames,
    empirical_profile,
    evaluate_checkpoint,
    generate_dataset,
    gradcheck,
    layer_rf,
    plan_block,
    resolve_config,
    rf_profile,
    stack_rf,
    train,
)

__all__ = [
    "ConfigError",
    "IoError",
    "Model",
    "NumericalError",
    "ShapeError",
    "default_config",
    "drop_frames",
    "empirical_profile",
    "evaluate_checkpoint",
    "generate_dataset",
    "gradcheck",
    "layer_rf",
    "plan_block",
    "resolve_config",
    "rf_profile",
    "stack_rf",
    "train",
]
