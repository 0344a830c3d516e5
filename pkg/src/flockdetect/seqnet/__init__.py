"""Trainable sequence classifiers (RNN, LSTM, Transformer) over pair features."""

from .checkpoint import load_checkpoint, save_checkpoint
from .model import (
    ARCHITECTURES,
    DEFAULT_THRESHOLD,
    ModelConfig,
    PredictionResult,
    SequenceModel,
    TrainConfig,
    TrainingMeta,
    predict_pair,
)
from .training import (
    TrainingHistory,
    backward,
    class_weights_from_labels,
    evaluate,
    train,
    weighted_bce,
)

__all__ = [
    "ARCHITECTURES",
    "DEFAULT_THRESHOLD",
    "ModelConfig",
    "PredictionResult",
    "SequenceModel",
    "TrainConfig",
    "TrainingMeta",
    "TrainingHistory",
    "backward",
    "class_weights_from_labels",
    "evaluate",
    "load_checkpoint",
    "predict_pair",
    "save_checkpoint",
    "train",
    "weighted_bce",
]
