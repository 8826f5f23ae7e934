"""Squared-error loss, SGD with exponential learning-rate decay, and the
minibatch training loop with best-validation snapshotting."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ShapeError, TrainingError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    lr_decay: float = 0.95
    epochs: int = 200
    batch_size: int = 16
    dropout_rate: float = 0.25
    seed: int = 0
    early_stop_patience: int = 10

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must be in (0, 1]")
        for name in ("epochs", "batch_size", "early_stop_patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must be in [0, 1)")

    def lr_at(self, epoch: int) -> float:
        return self.learning_rate * self.lr_decay ** epoch

    def to_dict(self) -> dict:
        return asdict(self)


def mse_loss(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: {pred.shape[0]} predictions vs {target.shape[0]} targets")
    return float(np.mean((target - pred) ** 2))


def mse_grad(pred, target) -> np.ndarray:
    """dL/dpred for the batch-mean squared error."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    return 2.0 * (pred - target) / pred.size


def sgd_step(model, grads: dict, config: TrainConfig, epoch: int):
    """In-place ``p <- p - lr(epoch) * grad`` over the model's trainable parameters."""
    lr = config.lr_at(epoch)
    params = model.parameters()
    if set(grads) != {name for name, _ in params}:
        raise ValueError("gradient set does not match model parameters")
    for name, _ in params:
        if not np.all(np.isfinite(grads[name])):
            raise TrainingError(f"non-finite gradient for parameter '{name}'")
    for name, value in params:
        model.set_parameter(name, value - lr * grads[name])
    return model


def snapshot(model) -> dict[str, np.ndarray]:
    return {name: value.copy() for name, value in model.parameters()}


def restore(model, snap: dict[str, np.ndarray]) -> None:
    for name, value in snap.items():
        model.set_parameter(name, value)


def _take(inputs, idx):
    return {k: v[idx] for k, v in inputs.items()}


def predict_batches(model, inputs: dict, batch_size: int = 64) -> np.ndarray:
    n = len(next(iter(inputs.values())))
    out = np.empty(n)
    for start in range(0, n, batch_size):
        sl = slice(start, start + batch_size)
        out[sl] = model.forward(_take(inputs, sl), mode="eval")
    return out


def train(model, train_set, val_set, config: TrainConfig):
    """Minibatch SGD keeping the parameters with the lowest validation MSE.

    ``train_set`` and ``val_set`` are ``(inputs, targets)`` pairs where
    ``inputs`` maps feature kind to an array with examples on axis 0.
    History entry 0 is the untrained model; entries 1.. are epochs.
    """
    x_tr, y_tr = train_set
    x_va, y_va = val_set
    y_tr = np.asarray(y_tr, dtype=np.float64)
    y_va = np.asarray(y_va, dtype=np.float64)
    if len(y_tr) == 0 or len(y_va) == 0:
        raise ValueError("train and validation sets must be non-empty")
    rng = np.random.default_rng(config.seed)

    val0 = mse_loss(predict_batches(model, x_va), y_va)
    if not np.isfinite(val0):
        raise TrainingError("validation MSE is non-finite before training (epoch 0)")
    history = [{"epoch": 0, "train_mse": None, "val_mse": val0, "lr": None}]
    best, best_snap, stale = val0, snapshot(model), 0

    n = len(y_tr)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            pred = model.forward(_take(x_tr, idx), mode="train", rng=rng)
            total += mse_loss(pred, y_tr[idx]) * len(idx)
            grads = model.backward(mse_grad(pred, y_tr[idx]))
            try:
                sgd_step(model, grads, config, epoch - 1)
            except TrainingError as exc:
                raise TrainingError(f"epoch {epoch}: {exc}") from exc
        val = mse_loss(predict_batches(model, x_va), y_va)
        if not np.isfinite(val):
            raise TrainingError(f"validation MSE diverged at epoch {epoch}")
        history.append({"epoch": epoch, "train_mse": total / n, "val_mse": val, "lr": config.lr_at(epoch - 1)})
        if val < best:
            best, best_snap, stale = val, snapshot(model), 0
        else:
            stale += 1
            if stale >= config.early_stop_patience:
                log.debug("early stop at epoch %d (best val %.6g)", epoch, best)
                break
    restore(model, best_snap)
    if hasattr(model, "clear"):
        model.clear()
    return model, history
