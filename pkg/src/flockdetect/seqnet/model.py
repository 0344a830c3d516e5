"""Model configuration, the SequenceModel container, and inference entry points."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ConfigMismatch, InvalidInput, NumericalFailure
from ..features import ScalerState, featurize_pair, scale_features
from . import lstm, rnn, transformer
from .ops import sigmoid

ARCHITECTURES = {"rnn": rnn, "lstm": lstm, "transformer": transformer}

DEFAULT_THRESHOLD = 0.9


@dataclass(frozen=True)
class ModelConfig:
    arch: str = "transformer"
    input_dim: int = 6
    hidden_size: int = 64
    num_layers: int = 1
    heads: int = 4
    ff_multiplier: int = 4
    dropout: float = 0.0
    seed: int = 0
    dtw_mode: str = "full_broadcast"
    position_encoding: bool = True

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"unknown arch {self.arch!r}")
        if self.hidden_size < 1 or self.num_layers < 1:
            raise ValueError("hidden_size and num_layers must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.arch == "transformer" and self.hidden_size % self.heads != 0:
            raise ValueError(
                f"hidden_size {self.hidden_size} not divisible by heads {self.heads}")

    def to_dict(self) -> dict:
        return {
            "arch": self.arch, "input_dim": self.input_dim,
            "hidden_size": self.hidden_size, "num_layers": self.num_layers,
            "heads": self.heads, "ff_multiplier": self.ff_multiplier,
            "dropout": self.dropout, "seed": self.seed,
            "dtw_mode": self.dtw_mode, "position_encoding": self.position_encoding,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    max_epochs: int = 1000
    batch_size: int = 32
    early_stop_patience: int = 50
    class_weights: tuple[float, float] = (1.0, 1.0)
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "class_weights", tuple(self.class_weights))
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.max_epochs < 0 or self.early_stop_patience < 0:
            raise ValueError("max_epochs and early_stop_patience must be >= 0")


@dataclass
class TrainingMeta:
    epochs_run: int = 0
    best_val_loss: Optional[float] = None
    wall_time_s: float = 0.0
    trained_sequence_length: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "epochs_run": self.epochs_run,
            "best_val_loss": None if self.best_val_loss is None
            else float(self.best_val_loss).hex(),
            "wall_time_s": float(self.wall_time_s).hex(),
            "trained_sequence_length": self.trained_sequence_length,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingMeta":
        return cls(
            epochs_run=int(data["epochs_run"]),
            best_val_loss=None if data["best_val_loss"] is None
            else float.fromhex(data["best_val_loss"]),
            wall_time_s=float.fromhex(data["wall_time_s"]),
            trained_sequence_length=data["trained_sequence_length"],
        )


@dataclass(frozen=True)
class PredictionResult:
    probability: float
    label: int
    threshold_used: float

    def __post_init__(self):
        expected = 1 if self.probability >= self.threshold_used else 0
        if self.label != expected:
            raise ValueError("label inconsistent with threshold rule (>=)")


@dataclass
class SequenceModel:
    """Parameters plus everything needed to reproduce predictions."""

    config: ModelConfig
    params: dict[str, np.ndarray]
    scaler: Optional[ScalerState] = None
    meta: TrainingMeta = field(default_factory=TrainingMeta)

    @classmethod
    def create(cls, config: ModelConfig) -> "SequenceModel":
        rng = np.random.default_rng(config.seed)
        params = ARCHITECTURES[config.arch].init_params(config, rng)
        return cls(config=config, params=params)

    def with_params(self, params: dict[str, np.ndarray]) -> "SequenceModel":
        return SequenceModel(config=self.config, params=params,
                             scaler=self.scaler, meta=self.meta)

    def forward_batch(self, x: np.ndarray, chunk_size: int = 64) -> np.ndarray:
        """Scaled feature batch (B, L, input_dim) -> probabilities (B,).

        Inference is chunked so attention buffers stay bounded for large B.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[2] != self.config.input_dim:
            raise InvalidInput(f"expected (B, L, {self.config.input_dim}), got {x.shape}")
        if x.shape[1] < 1:
            raise InvalidInput("sequence length must be >= 1")
        if not np.all(np.isfinite(x)):
            raise InvalidInput("input contains non-finite values")
        arch = ARCHITECTURES[self.config.arch]
        probs = np.empty(x.shape[0])
        for start in range(0, x.shape[0], chunk_size):
            logits, cache = arch.forward(
                self.params, self.config, x[start:start + chunk_size])
            if not np.all(np.isfinite(logits)):
                raise NumericalFailure(
                    f"non-finite activations in {_first_bad_stage(cache)}")
            probs[start:start + chunk_size] = sigmoid(logits)
        return probs

    def forward(self, features: np.ndarray, already_scaled: bool = False) -> float:
        """Single (L, input_dim) feature matrix -> probability in (0, 1).

        Unless already_scaled, the model's fitted scaler is applied first.
        """
        feats = np.asarray(features, dtype=np.float64)
        if feats.ndim != 2:
            raise InvalidInput(f"expected a 2-d feature matrix, got shape {feats.shape}")
        if not already_scaled:
            if self.scaler is None:
                raise InvalidInput("model has no fitted scaler; pass already_scaled=True")
            feats = scale_features(self.scaler, feats)
        return float(self.forward_batch(feats[None, :, :])[0])


def _first_bad_stage(cache) -> str:
    for name, arr in cache.get("trace", []):
        if not np.all(np.isfinite(arr)):
            return name
    return "unknown stage"


def predict_pair(model: SequenceModel, block_a, block_b,
                 threshold: float = DEFAULT_THRESHOLD) -> PredictionResult:
    """Featurize, scale, and classify one pair of aligned blocks.

    The decision rule is inclusive: probability >= threshold means flock.
    """
    trained_L = model.meta.trained_sequence_length
    if trained_L is not None and len(block_a) != trained_L:
        raise ConfigMismatch(
            f"model was trained on sequence length {trained_L}, "
            f"blocks have {len(block_a)}")
    features = featurize_pair(block_a, block_b, model.config.dtw_mode)
    probability = model.forward(features)
    return PredictionResult(
        probability=probability,
        label=1 if probability >= threshold else 0,
        threshold_used=threshold,
    )
