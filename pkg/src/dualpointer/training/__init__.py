"""Loss, optimizer, configuration, checkpoints and the training loop."""

from .checkpoint import (
    FORMAT_VERSION,
    MAGIC,
    Checkpoint,
    CheckpointError,
    checkpoint_bytes,
    load_checkpoint,
    parse_checkpoint,
    save_checkpoint,
)
from .config import ConfigError, TrainConfig, default_config_text, format_config, load_config, parse_config
from .loss import LossBreakdown, compute_loss, relation_ids
from .optim import Adam, NumericError, clip_grad_norm
from .trainer import EpochRecord, TrainResult, history_csv, train

__all__ = [
    "Adam", "Checkpoint", "CheckpointError", "ConfigError", "EpochRecord", "FORMAT_VERSION",
    "LossBreakdown", "MAGIC", "NumericError", "TrainConfig", "TrainResult", "checkpoint_bytes",
    "clip_grad_norm", "compute_loss", "default_config_text", "format_config", "history_csv",
    "load_checkpoint", "load_config", "parse_checkpoint", "parse_config", "relation_ids",
    "save_checkpoint", "train",
]
