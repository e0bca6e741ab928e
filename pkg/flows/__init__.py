"""Residual normalizing flows and their VI training loop."""
from flows.residual_flow import (
    EVAL_LOGDET,
    TRAIN_LOGDET,
    FlowModel,
    LogdetConfig,
    ResidualLayer,
    flow_forward,
    init_flow,
    load_checkpoint,
    save_checkpoint,
)
from flows.training import ExperimentReport, RunReport, TrainConfig, merge_reports, train, vi_loss

__all__ = [
    "EVAL_LOGDET",
    "TRAIN_LOGDET",
    "ExperimentReport",
    "FlowModel",
    "LogdetConfig",
    "ResidualLayer",
    "RunReport",
    "TrainConfig",
    "flow_forward",
    "init_flow",
    "load_checkpoint",
    "merge_reports",
    "save_checkpoint",
    "train",
    "vi_loss",
]
