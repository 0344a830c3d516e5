"""Weighted BCE loss, exact reverse-mode gradients, and the training loop.

Training is minibatch gradient descent (Adam by default) with per-epoch
seeded shuffling, early stopping on validation loss, and restoration of the
best parameters seen. Everything runs in float64 and is deterministic for
fixed seeds.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import NumericalFailure, TrainingDiverged
from .model import ARCHITECTURES, SequenceModel, TrainConfig, TrainingMeta
from .ops import sigmoid

LOSS_EPS = 1e-7
GRAD_CLIP_NORM = 5.0  # applied to recurrent architectures only
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def weighted_bce(prob: float, label: int, weights: tuple[float, float]) -> float:
    """-[w1*y*log(p) + w0*(1-y)*log(1-p)] with p clamped to [eps, 1-eps]."""
    p = min(max(prob, LOSS_EPS), 1.0 - LOSS_EPS)
    w0, w1 = weights
    if label == 1:
        return -w1 * math.log(p)
    return -w0 * math.log(1.0 - p)


def _batch_loss_and_dlogit(logits, labels, weights):
    """Mean weighted BCE over a batch and its gradient wrt the logits."""
    w0, w1 = weights
    probs = sigmoid(logits)
    clamped = np.clip(probs, LOSS_EPS, 1.0 - LOSS_EPS)
    losses = np.where(labels == 1, -w1 * np.log(clamped), -w0 * np.log(1.0 - clamped))
    loss = float(losses.mean())
    dclamped = np.where(labels == 1, -w1 / clamped, w0 / (1.0 - clamped))
    # Gradient vanishes inside the clamp region.
    in_range = (probs > LOSS_EPS) & (probs < 1.0 - LOSS_EPS)
    dlogit = dclamped * in_range * probs * (1.0 - probs) / labels.shape[0]
    return loss, dlogit


def backward(model: SequenceModel, batch_x: np.ndarray, batch_y: np.ndarray,
             weights: tuple[float, float] = (1.0, 1.0),
             train: bool = False, rng: np.random.Generator | None = None):
    """Exact gradients of the mean batch loss wrt every parameter.

    Returns (loss, grads) where grads mirrors the parameter dict.
    """
    arch = ARCHITECTURES[model.config.arch]
    logits, cache = arch.forward(model.params, model.config, batch_x,
                                 train=train, rng=rng)
    loss, dlogit = _batch_loss_and_dlogit(logits, batch_y, weights)
    grads = arch.backward(model.params, model.config, cache, dlogit)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalFailure(f"non-finite gradient in {name}")
    return loss, grads


def _clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> None:
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm:
        factor = max_norm / total
        for g in grads.values():
            g *= factor


class AdamState:
    def __init__(self, params: dict[str, np.ndarray]):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads, lr):
        self.t += 1
        bias1 = 1.0 - ADAM_BETA1 ** self.t
        bias2 = 1.0 - ADAM_BETA2 ** self.t
        for key in sorted(params):
            g = grads[key]
            self.m[key] = ADAM_BETA1 * self.m[key] + (1.0 - ADAM_BETA1) * g
            self.v[key] = ADAM_BETA2 * self.v[key] + (1.0 - ADAM_BETA2) * g * g
            m_hat = self.m[key] / bias1
            v_hat = self.v[key] / bias2
            params[key] -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def _sgd_step(params, grads, lr):
    for key in sorted(params):
        params[key] -= lr * grads[key]


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float
    elapsed_s: float


class TrainingHistory:
    """Per-epoch loss/accuracy trace with CSV export."""

    def __init__(self):
        self.epochs: list[EpochStats] = []

    def append(self, stats: EpochStats) -> None:
        self.epochs.append(stats)

    def to_csv(self, path: str | Path) -> None:
        lines = ["epoch,train_loss,val_loss,val_accuracy,elapsed_s"]
        for e in self.epochs:
            lines.append(
                f"{e.epoch},{e.train_loss:.10g},{e.val_loss:.10g},"
                f"{e.val_accuracy:.10g},{e.elapsed_s:.6f}"
            )
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _samples_to_arrays(samples):
    x = np.stack([np.asarray(s.features, dtype=np.float64) for s in samples])
    y = np.array([s.label for s in samples], dtype=np.int64)
    return x, y


def evaluate(model: SequenceModel, x: np.ndarray, y: np.ndarray,
             weights=(1.0, 1.0), threshold: float = 0.5) -> tuple[float, float]:
    """(mean loss, accuracy) of the model on a scaled feature set."""
    probs = model.forward_batch(x)
    clamped = np.clip(probs, LOSS_EPS, 1.0 - LOSS_EPS)
    w0, w1 = weights
    losses = np.where(y == 1, -w1 * np.log(clamped), -w0 * np.log(1.0 - clamped))
    predicted = (probs >= threshold).astype(np.int64)
    return float(losses.mean()), float((predicted == y).mean())


def class_weights_from_labels(labels) -> tuple[float, float]:
    """Inverse-frequency weights: w_c = n / (2 * n_c)."""
    labels = np.asarray(labels)
    n = labels.shape[0]
    n1 = int(labels.sum())
    n0 = n - n1
    if n0 == 0 or n1 == 0:
        return (1.0, 1.0)
    return (n / (2.0 * n0), n / (2.0 * n1))


def train(model: SequenceModel, train_set, val_set,
          cfg: TrainConfig) -> tuple[SequenceModel, TrainingHistory]:
    """Train on scaled PairSamples; returns (best model, history).

    Early stopping watches validation loss with the configured patience and
    restores the best parameters observed. Raises TrainingDiverged when the
    validation loss becomes NaN.
    """
    if not train_set or not val_set:
        raise ValueError("train and validation sets must be non-empty")
    x_train, y_train = _samples_to_arrays(train_set)
    x_val, y_val = _samples_to_arrays(val_set)
    L = x_train.shape[1]

    params = {k: v.copy() for k, v in model.params.items()}
    work = model.with_params(params)
    shuffle_rng = np.random.default_rng((cfg.seed, 1))
    dropout_rng = np.random.default_rng((cfg.seed, 2))
    adam = AdamState(params) if cfg.optimizer == "adam" else None
    clip = model.config.arch in ("rnn", "lstm")

    history = TrainingHistory()
    best_loss = math.inf
    best_params = {k: v.copy() for k, v in params.items()}
    stale = 0
    t_start = time.perf_counter()
    epochs_run = 0

    for epoch in range(1, cfg.max_epochs + 1):
        epochs_run = epoch
        order = shuffle_rng.permutation(x_train.shape[0])
        batch_losses = []
        for start in range(0, order.shape[0], cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = backward(work, x_train[idx], y_train[idx],
                                   cfg.class_weights, train=True, rng=dropout_rng)
            if clip:
                _clip_global_norm(grads, GRAD_CLIP_NORM)
            if adam is not None:
                adam.step(params, grads, cfg.learning_rate)
            else:
                _sgd_step(params, grads, cfg.learning_rate)
            batch_losses.append(loss)

        val_loss, val_acc = evaluate(work, x_val, y_val, cfg.class_weights)
        if math.isnan(val_loss):
            raise TrainingDiverged(epoch)
        history.append(EpochStats(
            epoch=epoch,
            train_loss=float(np.mean(batch_losses)),
            val_loss=val_loss,
            val_accuracy=val_acc,
            elapsed_s=time.perf_counter() - t_start,
        ))
        if val_loss < best_loss:
            best_loss = val_loss
            best_params = {k: v.copy() for k, v in params.items()}
            stale = 0
        else:
            stale += 1
            if stale > cfg.early_stop_patience:
                break

    wall = time.perf_counter() - t_start
    trained = SequenceModel(
        config=model.config,
        params=best_params,
        scaler=model.scaler,
        meta=TrainingMeta(
            epochs_run=epochs_run,
            best_val_loss=None if math.isinf(best_loss) else best_loss,
            wall_time_s=wall,
            trained_sequence_length=L,
        ),
    )
    return trained, history
