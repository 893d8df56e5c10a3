from profilebench.models.baseline import BaselineConfig, BaselineModel, train_baseline
from profilebench.models.checkpoint import (
    POOL_ATTENTION,
    POOL_LAST,
    POOL_MULTI,
    Checkpoint,
    init_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from profilebench.models.lstm import (
    attention_pool,
    bilstm_forward,
    lstm_cell,
    multi_pool,
)
from profilebench.models.training import (
    Batch,
    TrainConfig,
    forward_batch,
    forward_sample,
    loss_fn,
    neutral_correction,
    train,
    train_step,
)

__all__ = [
    "BaselineConfig",
    "BaselineModel",
    "Batch",
    "Checkpoint",
    "POOL_ATTENTION",
    "POOL_LAST",
    "POOL_MULTI",
    "TrainConfig",
    "attention_pool",
    "bilstm_forward",
    "forward_batch",
    "forward_sample",
    "init_checkpoint",
    "load_checkpoint",
    "loss_fn",
    "lstm_cell",
    "multi_pool",
    "neutral_correction",
    "save_checkpoint",
    "train",
    "train_baseline",
    "train_step",
]
