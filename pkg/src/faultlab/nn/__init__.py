"""Minimal from-scratch neural-network kernels for the fault classifier."""

from .checkpoint import load_checkpoint, save_checkpoint
from .layers import (
    BatchNorm1d,
    Conv1d,
    Dropout,
    GlobalAvgPool,
    Linear,
    ReLU,
    set_debug_checks,
    softmax,
)
from .model import FaultCNN1D, parameter_count, predict_classes, predict_logits

__all__ = [
    "BatchNorm1d", "Conv1d", "Dropout", "FaultCNN1D", "GlobalAvgPool",
    "Linear", "ReLU", "load_checkpoint", "parameter_count",
    "predict_classes", "predict_logits", "save_checkpoint",
    "set_debug_checks", "softmax",
]
