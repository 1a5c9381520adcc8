from .config import ModelConfig, ModelConfigError, compact_config, desk_config
from .net import (
    DisentangledRIRNet,
    init_model,
    load_checkpoint,
    model_summary,
    parameter_count,
    save_checkpoint,
)

__all__ = [
    "ModelConfig",
    "ModelConfigError",
    "compact_config",
    "desk_config",
    "DisentangledRIRNet",
    "init_model",
    "load_checkpoint",
    "model_summary",
    "parameter_count",
    "save_checkpoint",
]
