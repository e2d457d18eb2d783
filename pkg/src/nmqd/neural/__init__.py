"""Operator learner: channel encoding, Fourier-layer network, training."""

from .model import (
    ArchConfig,
    NeuralOperator,
    build_model,
    encode_input,
    model_forward,
)
from .training import (
    TrainLog,
    error_metric,
    load_checkpoint,
    loss_fn,
    save_checkpoint,
    train,
)

__all__ = [
    "ArchConfig",
    "NeuralOperator",
    "build_model",
    "encode_input",
    "model_forward",
    "TrainLog",
    "error_metric",
    "load_checkpoint",
    "loss_fn",
    "save_checkpoint",
    "train",
]
